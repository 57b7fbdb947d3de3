"""Seeded data generation, metrics and replicate sweeps for the simulation studies.

Every random draw comes from its own named stream derived from the scenario
seed, so switching one feature on or off (say, missingness) never changes the
draws of another (say, the noise).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .linalg import ShapeError, as_matrix, svd
from .selection import DEFAULT_LAMBDA_MIN, DEFAULT_N_LAMBDA, DEFAULT_TAUS, build_grid, cross_validate
from .penalty import PenaltySpec
from .solver import FitConfig, estimated_rank

STREAMS = {
    "design": 0,
    "factors": 1,
    "noise": 2,
    "mask": 3,
    "contamination": 4,
    "test_design": 5,
    "test_noise": 6,
    "folds": 7,
}

NOISE_KINDS = ("gaussian", "scaled_t", "cauchy")
DESIGNS = ("iid_gaussian", "ar1")
CONTAMINATION_MODES = ("additive", "replace")


def stream(seed: int, purpose: str) -> np.random.Generator:
    """Independent generator for ``purpose`` under ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(STREAMS[purpose],)))


@dataclass(frozen=True)
class SimScenario:
    """Declarative data-generating process.

    ``noise`` picks the base family: ``gaussian`` uses ``noise_sd``,
    ``scaled_t`` draws ``t_scale * t(t_df)``, ``cauchy`` draws standard Cauchy.
    A positive ``contamination`` adds outliers to that fraction of training
    response entries (``N(0, outlier_sd**2)`` shocks, or replacement values
    with ``contamination_mode="replace"``).
    """

    n: int = 200
    p: int = 12
    q: int = 7
    r: int = 2
    design: str = "iid_gaussian"
    rho_x: float = 0.0
    noise: str = "gaussian"
    noise_sd: float = 1.0
    t_df: float = 3.0
    t_scale: float = 1.0
    contamination: float = 0.0
    outlier_sd: float = 10.0
    contamination_mode: str = "additive"
    missing_fraction: float = 0.0
    n_test: int = 5000
    seed: int = 0
    name: str = "custom"

    def __post_init__(self):
        for key in ("n", "p", "q", "r", "n_test"):
            value = getattr(self, key)
            if int(value) != value or value < 1:
                raise ValueError(f"{key} must be a positive integer, got {value}")
        if self.r > min(self.p, self.q):
            raise ValueError(f"rank r = {self.r} exceeds min(p, q) = {min(self.p, self.q)}")
        if self.design not in DESIGNS:
            raise ValueError(f"design must be one of {DESIGNS}, got {self.design!r}")
        if not -1 < self.rho_x < 1:
            raise ValueError(f"rho_x must lie in (-1, 1), got {self.rho_x}")
        if self.noise not in NOISE_KINDS:
            raise ValueError(f"noise must be one of {NOISE_KINDS}, got {self.noise!r}")
        if self.noise_sd < 0 or self.t_scale < 0 or self.outlier_sd < 0:
            raise ValueError("noise_sd, t_scale and outlier_sd must be non-negative")
        if not self.t_df > 0:
            raise ValueError(f"t_df must be positive, got {self.t_df}")
        if not 0 <= self.contamination < 1:
            raise ValueError(f"contamination fraction must lie in [0, 1), got {self.contamination}")
        if self.contamination_mode not in CONTAMINATION_MODES:
            raise ValueError(f"contamination_mode must be one of {CONTAMINATION_MODES}")
        if not 0 <= self.missing_fraction < 1:
            raise ValueError(f"missing_fraction must lie in [0, 1), got {self.missing_fraction}")

    def with_seed(self, seed: int) -> "SimScenario":
        return replace(self, seed=int(seed))


@dataclass
class SimData:
    X: np.ndarray
    Y: np.ndarray
    mask: np.ndarray
    B0: np.ndarray
    X_test: np.ndarray
    Y_test_clean: np.ndarray
    Y_test: np.ndarray


@dataclass
class SimReport:
    est_error: float
    mspe_test: float
    rank_hat: int


def draw_noise(rng: np.random.Generator, shape, scenario: SimScenario) -> np.ndarray:
    if scenario.noise == "gaussian":
        return scenario.noise_sd * rng.standard_normal(shape)
    if scenario.noise == "scaled_t":
        return scenario.t_scale * rng.standard_t(scenario.t_df, size=shape)
    # inverse-CDF Cauchy keeps draws platform independent
    return np.tan(np.pi * (rng.random(shape) - 0.5))


def draw_design(rng: np.random.Generator, n: int, p: int, scenario: SimScenario) -> np.ndarray:
    Z = rng.standard_normal((n, p))
    if scenario.design == "iid_gaussian" or scenario.rho_x == 0:
        return Z
    idx = np.arange(p)
    cov = scenario.rho_x ** np.abs(idx[:, None] - idx[None, :])
    return Z @ np.linalg.cholesky(cov).T


def apply_contamination(M, fraction: float, outlier_sd: float = 10.0, rng=None, mode: str = "additive"):
    """Hit ``round(fraction * M.size)`` uniformly chosen entries with outliers.

    ``mode="additive"`` adds ``N(0, outlier_sd**2)`` draws; ``"replace"``
    overwrites the entries with such draws. ``rng`` may be a Generator or a seed.
    """
    M = as_matrix(M)
    if not 0 <= fraction < 1:
        raise ValueError(f"contamination fraction must lie in [0, 1), got {fraction}")
    if mode not in CONTAMINATION_MODES:
        raise ValueError(f"mode must be one of {CONTAMINATION_MODES}, got {mode!r}")
    out = M.copy()
    count = int(math.floor(fraction * M.size + 0.5))
    if count == 0:
        return out
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    idx = rng.choice(M.size, size=count, replace=False)
    shocks = outlier_sd * rng.standard_normal(count)
    flat = out.reshape(-1)
    if mode == "additive":
        flat[idx] += shocks
    else:
        flat[idx] = shocks
    return out


def uniform_mask(rng: np.random.Generator, shape, fraction: float) -> np.ndarray:
    """Mask deleting exactly ``round(fraction * size)`` uniformly chosen entries."""
    mask = np.ones(shape, dtype=bool)
    size = int(np.prod(shape))
    count = int(math.floor(fraction * size + 0.5))
    if count >= size:
        raise ValueError("missing fraction would delete every entry")
    if count:
        mask.reshape(-1)[rng.choice(size, size=count, replace=False)] = False
    return mask


def generate(scenario: SimScenario) -> SimData:
    """Draw training data, truth and a test set for ``scenario``.

    ``B0 = U0 V0^T`` with standard-normal ``p x r`` and ``q x r`` factors.
    Training responses are ``X B0 + E``, optionally contaminated, then masked.
    The test set uses fresh design and noise draws and no contamination.
    """
    s = scenario
    X = draw_design(stream(s.seed, "design"), s.n, s.p, s)
    fac = stream(s.seed, "factors")
    B0 = fac.standard_normal((s.p, s.r)) @ fac.standard_normal((s.q, s.r)).T
    Y = X @ B0 + draw_noise(stream(s.seed, "noise"), (s.n, s.q), s)
    if s.contamination > 0:
        Y = apply_contamination(Y, s.contamination, s.outlier_sd, stream(s.seed, "contamination"), s.contamination_mode)
    mask = uniform_mask(stream(s.seed, "mask"), (s.n, s.q), s.missing_fraction)
    X_test = draw_design(stream(s.seed, "test_design"), s.n_test, s.p, s)
    Y_test_clean = X_test @ B0
    Y_test = Y_test_clean + draw_noise(stream(s.seed, "test_noise"), (s.n_test, s.q), s)
    return SimData(X, np.where(mask, Y, 0.0), mask, B0, X_test, Y_test_clean, Y_test)


def metrics(B_hat, B0, X_test, Y_test, rank_tol_rel: float = 1e-6, norm: str = "fro") -> SimReport:
    """Estimation error, test MSPE and estimated rank of ``B_hat``.

    ``est_error`` is the squared Frobenius norm of ``B_hat - B0``
    (``norm="spectral"`` gives the squared spectral norm instead).
    ``mspe_test = ||Y_test - X_test B_hat||_F**2 / (q * n_test)``.
    """
    B_hat, B0 = as_matrix(B_hat, "B_hat"), as_matrix(B0, "B0")
    X_test, Y_test = as_matrix(X_test, "X_test"), as_matrix(Y_test, "Y_test")
    if B_hat.shape != B0.shape:
        raise ShapeError(f"B_hat shape {B_hat.shape} differs from B0 shape {B0.shape}")
    if X_test.shape[1] != B_hat.shape[0] or Y_test.shape != (X_test.shape[0], B_hat.shape[1]):
        raise ShapeError("test matrices are not conformable with B_hat")
    D = B_hat - B0
    if norm == "fro":
        err = float(np.sum(D * D))
    elif norm == "spectral":
        err = float(svd(D).singular_values[0] ** 2)
    else:
        raise ValueError(f"norm must be 'fro' or 'spectral', got {norm!r}")
    R = Y_test - X_test @ B_hat
    mspe = float(np.sum(R * R) / R.size)
    rank = estimated_rank(svd(B_hat).singular_values, rank_tol_rel)
    return SimReport(err, mspe, rank)


@dataclass(frozen=True)
class Method:
    """A fitting recipe: Huber (tau tuned over a grid) or squared loss, with a penalty family."""

    name: str
    family: str
    robust: bool

    @property
    def taus(self):
        return DEFAULT_TAUS if self.robust else (math.inf,)


METHODS = {
    f"{loss}_{fam}": Method(f"{loss}_{fam}", "nuclear" if fam == "nucl" else fam, loss == "huber")
    for loss in ("huber", "lsq")
    for fam in ("scad", "mcp", "nucl")
}


@dataclass(frozen=True)
class CvSettings:
    k: int = 5
    n_lambda: int = DEFAULT_N_LAMBDA
    lambda_min: float = DEFAULT_LAMBDA_MIN
    tol: float = 1e-5
    max_iter: int = 500
    rank_tol_rel: float = 1e-6
    eta_mcp: float = 3.0
    eta_scad: float = 3.7


def fit_method(method: Method, X, Y, mask, settings: CvSettings, seed):
    """Cross-validate ``method`` on training data and return the CV report."""
    eta = {"mcp": settings.eta_mcp, "scad": settings.eta_scad}.get(method.family)
    base = FitConfig(
        tau=1.0,
        penalty=PenaltySpec(method.family, 0.0, eta),
        tol=settings.tol,
        max_iter=settings.max_iter,
        rank_tol_rel=settings.rank_tol_rel,
    )
    grid = build_grid(X, Y, mask, settings.n_lambda, settings.lambda_min, method.taus)
    return cross_validate(Y, X, mask, grid, settings.k, seed, base)


def run_replicate(scenario: SimScenario, methods, settings: CvSettings, replicate: int, base_seed: int):
    """All methods on one replicate; failures are recorded, not raised."""
    seed = int(base_seed) + int(replicate)
    data = generate(scenario.with_seed(seed))
    fold_seed = int(stream(seed, "folds").integers(2**32))
    rows = []
    for name in methods:
        method = METHODS[name]
        row = {"replicate": int(replicate), "seed": seed, "method": name}
        try:
            cv = fit_method(method, data.X, data.Y, data.mask, settings, fold_seed)
            rep = metrics(cv.final_fit.B_hat, data.B0, data.X_test, data.Y_test, settings.rank_tol_rel)
            row.update(
                est_error=rep.est_error,
                mspe_test=rep.mspe_test,
                rank=rep.rank_hat,
                tau=cv.selected_tau,
                lam=cv.selected_lambda,
                error="",
            )
        except Exception as exc:  # recorded per replicate so the sweep continues
            row.update(est_error=math.nan, mspe_test=math.nan, rank=-1, tau=math.nan, lam=math.nan,
                       error=f"{type(exc).__name__}: {exc}")
        rows.append(row)
    return rows


def _run_replicate_args(args):
    return run_replicate(*args)


METRICS = ("est_error", "mspe_test", "rank")


@dataclass
class ReplicateTable:
    rows: list[dict]
    summary: list[dict] = field(default_factory=list)

    @property
    def failures(self) -> list[dict]:
        return [r for r in self.rows if r["error"]]


def aggregate(rows, methods) -> list[dict]:
    """Mean and sample SD (0 for a single replicate) per method and metric."""
    out = []
    for name in methods:
        ok = [r for r in rows if r["method"] == name and not r["error"]]
        for metric in METRICS:
            vals = np.array([r[metric] for r in ok], dtype=float)
            if vals.size == 0:
                mean = sd = math.nan
            else:
                mean = float(vals.mean())
                sd = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
            out.append({"method": name, "metric": metric, "mean": mean, "sd": sd, "n_ok": int(vals.size)})
    return out


def run_replicates(
    scenario: SimScenario,
    methods=("huber_scad", "huber_mcp", "huber_nucl"),
    n_reps: int = 20,
    settings: CvSettings | None = None,
    base_seed: int | None = None,
    workers: int = 1,
) -> ReplicateTable:
    """Run ``n_reps`` seeded replicates; replicate ``r`` uses seed ``base_seed + r``."""
    if n_reps < 1:
        raise ValueError("n_reps must be at least 1")
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown method(s) {unknown}; choose from {sorted(METHODS)}")
    settings = CvSettings() if settings is None else settings
    base_seed = scenario.seed if base_seed is None else int(base_seed)
    jobs = [(scenario, tuple(methods), settings, r, base_seed) for r in range(n_reps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            per_rep = list(ex.map(_run_replicate_args, jobs))
    else:
        per_rep = [run_replicate(*j) for j in jobs]
    rows = [row for rep in per_rep for row in rep]
    return ReplicateTable(rows, aggregate(rows, methods))


# ---------------------------------------------------------------------------
# presets and scenario files

_NOISES = {
    "gauss": dict(noise="gaussian", noise_sd=1.0),
    "gauss3": dict(noise="gaussian", noise_sd=3.0),
    "t3x1.5": dict(noise="scaled_t", t_df=3.0, t_scale=1.5),
    "t3": dict(noise="scaled_t", t_df=3.0, t_scale=1.0),
    "cauchy": dict(noise="cauchy"),
}


def _build_presets() -> dict[str, SimScenario]:
    presets = {}
    for r in (2, 5):
        for key in ("gauss", "gauss3", "t3x1.5", "cauchy"):
            for p, suffix in ((12, ""), (120, "-p120")):
                name = f"table1-{key}-r{r}{suffix}"
                presets[name] = SimScenario(p=p, r=r, name=name, **_NOISES[key])
        for key in ("gauss", "gauss3", "t3", "cauchy"):
            name = f"table2-ar1-{key}-r{r}"
            presets[name] = SimScenario(r=r, design="ar1", rho_x=0.5, name=name, **_NOISES[key])
            name = f"table2-q40-{key}-r{r}"
            presets[name] = SimScenario(q=40, r=r, name=name, **_NOISES[key])
        for pct in (5, 10, 20):
            for key in ("gauss", "t3"):
                name = f"table3-outlier-{pct}pct-{key}-r{r}"
                presets[name] = SimScenario(r=r, contamination=pct / 100, name=name, **_NOISES[key])
        for pct in (10, 20):
            for key in ("gauss", "t3x1.5"):
                name = f"table4-missing-{pct}pct-{key}-r{r}"
                presets[name] = SimScenario(r=r, missing_fraction=pct / 100, name=name, **_NOISES[key])
    for pct in (5, 10, 20):
        presets[f"table3-outlier-{pct}pct"] = replace(presets[f"table3-outlier-{pct}pct-gauss-r2"],
                                                      name=f"table3-outlier-{pct}pct")
    for pct in (10, 20):
        presets[f"table4-missing-{pct}pct"] = replace(presets[f"table4-missing-{pct}pct-gauss-r2"],
                                                      name=f"table4-missing-{pct}pct")
    return presets


PRESETS = _build_presets()


class ScenarioFileError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path, self.line = path, line


_FIELD_TYPES = {f.name: f.type for f in fields(SimScenario)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    if kind == "int":
        value = float(raw)
        if value != int(value):
            raise ValueError(f"expected an integer, got {raw!r}")
        return int(value)
    if kind == "float":
        return float(raw)
    return raw


def parse_scenario(text: str, path="<scenario>") -> SimScenario:
    """Parse a flat ``key = value`` scenario file.

    Blank lines and ``#`` comments are ignored. ``preset = NAME`` (if present,
    it must come first) starts from a named preset; later keys override it.
    Keys are the :class:`SimScenario` field names.
    """
    values: dict = {}
    base = SimScenario()
    last_line = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        last_line = lineno
        if "=" not in stripped:
            raise ScenarioFileError(path, lineno, f"expected 'key = value', got {stripped!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key in values or (key == "preset" and values):
            raise ScenarioFileError(path, lineno, f"'{key}' must come first and appear once" if key == "preset"
                                    else f"duplicate key {key!r}")
        if key == "preset":
            if raw not in PRESETS:
                raise ScenarioFileError(path, lineno, f"unknown preset {raw!r}")
            base = PRESETS[raw]
            values["preset"] = raw
            continue
        if key not in _FIELD_TYPES:
            raise ScenarioFileError(path, lineno, f"unknown key {key!r}; valid keys: {sorted(_FIELD_TYPES)}")
        try:
            values[key] = _coerce(key, raw)
            replace(base, **{k: v for k, v in values.items() if k != "preset"})
        except ValueError as exc:
            raise ScenarioFileError(path, lineno, f"invalid value for {key!r}: {exc}") from None
    values.pop("preset", None)
    try:
        return replace(base, **values)
    except ValueError as exc:
        raise ScenarioFileError(path, last_line, str(exc)) from None


def load_scenario(path) -> SimScenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read(), path)


def scenario_to_text(scenario: SimScenario) -> str:
    return "".join(f"{k} = {v}\n" for k, v in asdict(scenario).items())
