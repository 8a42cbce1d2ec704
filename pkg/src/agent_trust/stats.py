"""Proportion tests, the df=1 chi-square tail, and one-predictor logistic regression."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DomainError
from .protocol import Condition, Incentive, Task, Wave, wave_conditions

# Values printed in the source study's results, keyed by (wave, task).
PUBLISHED_CHI2: dict[tuple[str, str], float] = {
    ("w1", "trust"): 108.25,
    ("w1", "nonsocial"): 8.49,
    ("w2", "trust"): 8.49,
    ("w2", "nonsocial"): 1.35,
}
PUBLISHED_TOLERANCE = 0.01


# ---------------------------------------------------------------------------
# 2x2 proportion test
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ContingencyTable2x2:
    """Row 1 = group 1 (successes a, failures b); row 2 = group 2 (c, d)."""

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self) -> None:
        if min(self.a, self.b, self.c, self.d) < 0:
            raise DomainError("counts must be non-negative")
        if self.a + self.b + self.c + self.d == 0:
            raise DomainError("table is empty")

    @property
    def n(self) -> int:
        return self.a + self.b + self.c + self.d


@dataclass(frozen=True)
class ProportionTestResult:
    chi2: float
    df: int
    p_two_tailed: float
    p1_hat: float
    p2_hat: float
    corrected: bool


def chi2_sf_df1(x: float) -> float:
    """Upper tail of the chi-square distribution with one degree of freedom."""
    if x < 0 or math.isnan(x):
        raise DomainError(f"chi-square statistic must be >= 0, got {x}")
    return math.erfc(math.sqrt(x / 2.0))


def prop_test_2x2(table: ContingencyTable2x2, continuity: bool = True) -> ProportionTestResult:
    a, b, c, d = table.a, table.b, table.c, table.d
    r1, r2 = a + b, c + d
    if r1 == 0 or r2 == 0:
        raise DomainError("both groups need at least one observation")
    c1, c2 = a + c, b + d
    n = table.n
    if c1 == 0 or c2 == 0:
        chi2 = 0.0
    else:
        diff = abs(a * d - b * c)
        if continuity:
            diff = max(0.0, diff - n / 2.0)
        chi2 = n * diff * diff / (r1 * r2 * c1 * c2)
    return ProportionTestResult(
        chi2=chi2,
        df=1,
        p_two_tailed=chi2_sf_df1(chi2),
        p1_hat=a / r1,
        p2_hat=c / r2,
        corrected=continuity,
    )


# ---------------------------------------------------------------------------
# Logistic regression
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LogisticFit:
    beta0: float
    beta1: float
    se0: float
    se1: float
    z1: float
    p1: float
    log_lik: float
    iterations: int
    converged: bool
    separation_flag: bool
    diagnostics: tuple[str, ...] = ()

    @property
    def estimable(self) -> bool:
        return self.converged and not self.separation_flag


def _as_xy(x: Sequence[float], y: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if xa.ndim != 1 or xa.shape != ya.shape:
        raise DomainError("x and y must be one-dimensional and the same length")
    if not np.all((ya == 0) | (ya == 1)):
        raise DomainError("y must be 0/1")
    return xa, ya


def log_likelihood(beta: Sequence[float], x: Sequence[float], y: Sequence[int]) -> float:
    xa, ya = _as_xy(x, y)
    eta = beta[0] + beta[1] * xa
    return float(np.sum(ya * eta - np.logaddexp(0.0, eta)))


def score(beta: Sequence[float], x: Sequence[float], y: Sequence[int]) -> np.ndarray:
    """Gradient of :func:`log_likelihood` with respect to (beta0, beta1)."""
    xa, ya = _as_xy(x, y)
    resid = ya - _sigmoid(beta[0] + beta[1] * xa)
    return np.array([resid.sum(), (resid * xa).sum()])


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -eta))


def _separation(x: np.ndarray, y: np.ndarray) -> str | None:
    ones, zeros = x[y == 1], x[y == 0]
    if ones.size == 0 or zeros.size == 0:
        return "outcome is constant"
    if zeros.max() < ones.min() or ones.max() < zeros.min():
        return "complete separation"
    if zeros.max() <= ones.min() or ones.max() <= zeros.min():
        return "quasi-complete separation"
    return None


def fit_logistic(
    x: Sequence[float],
    y: Sequence[int],
    *,
    max_iter: int = 100,
    tol: float = 1e-10,
    max_halvings: int = 10,
    divergence_bound: float = 15.0,
    grad_tol: float = 1e-9,
) -> LogisticFit:
    """Fit ``logit P(y=1) = beta0 + beta1 * x`` by IRLS with step-halving.

    The regressor is standardized internally; estimates and Wald standard
    errors are mapped back to the caller's scale. Never raises on
    separated or degenerate outcomes; those come back flagged.
    """
    xa, ya = _as_xy(x, y)
    if xa.size < 2:
        raise DomainError("need at least two observations")
    sd = float(xa.std())
    if sd == 0.0:
        raise DomainError("x is constant; slope is not identified")
    mean = float(xa.mean())
    z = (xa - mean) / sd
    design = np.column_stack([np.ones_like(z), z])

    diagnostics = []
    why = _separation(xa, ya)
    separated = why is not None
    if why:
        diagnostics.append(why)

    def ll(g: np.ndarray) -> float:
        eta = design @ g
        return float(np.sum(ya * eta - np.logaddexp(0.0, eta)))

    gamma = np.zeros(2)
    cur = ll(gamma)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        mu = _sigmoid(design @ gamma)
        grad = design.T @ (ya - mu)
        info = design.T @ (design * (mu * (1 - mu))[:, None])
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(info, grad, rcond=None)[0]
        new = ll(gamma + step)
        halvings = 0
        while new < cur and halvings < max_halvings:
            step = step / 2
            new = ll(gamma + step)
            halvings += 1
        gamma = gamma + step
        change, cur = abs(new - cur), new
        if np.max(np.abs(gamma)) > divergence_bound:
            separated = True
            diagnostics.append(f"|coefficient| exceeded {divergence_bound} on the standardized scale")
            break
        mu = _sigmoid(design @ gamma)
        grad_norm = float(np.linalg.norm(design.T @ (ya - mu)))
        if change <= tol and grad_norm <= grad_tol:
            converged = True
            break
    if separated:
        converged = False
    elif not converged:
        diagnostics.append(f"no convergence after {max_iter} iterations")

    mu = _sigmoid(design @ gamma)
    info = design.T @ (design * (mu * (1 - mu))[:, None])
    try:
        cov_std = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        cov_std = np.full((2, 2), np.nan)
    jac = np.array([[1.0, -mean / sd], [0.0, 1.0 / sd]])
    beta = jac @ gamma
    cov = jac @ cov_std @ jac.T
    se0, se1 = (float(math.sqrt(v)) if v >= 0 else math.nan for v in np.diag(cov))
    se_g1 = math.sqrt(cov_std[1, 1]) if cov_std[1, 1] >= 0 else math.nan
    z1 = float(gamma[1] / se_g1) if se_g1 and not math.isnan(se_g1) else math.nan
    p1 = math.erfc(abs(z1) / math.sqrt(2.0)) if not math.isnan(z1) else math.nan
    return LogisticFit(
        beta0=float(beta[0]),
        beta1=float(beta[1]),
        se0=se0,
        se1=se1,
        z1=z1,
        p1=p1,
        log_lik=cur,
        iterations=iterations,
        converged=converged,
        separation_flag=separated,
        diagnostics=tuple(diagnostics),
    )


# ---------------------------------------------------------------------------
# Tabulation and the per-wave analysis
# ---------------------------------------------------------------------------


@dataclass
class ChoiceCounts:
    A: int = 0
    B: int = 0
    NA: int = 0

    @property
    def total(self) -> int:
        return self.A + self.B + self.NA


def _field(record, name: str):
    return record[name] if isinstance(record, Mapping) else getattr(record, name)


def _label_of(record) -> str:
    cond = _field(record, "condition")
    return cond.label if isinstance(cond, Condition) else str(cond)


def _choice_of(record) -> str:
    choice = _field(record, "choice")
    return getattr(choice, "value", choice)


def tabulate(records: Iterable, wave: Wave | str | int | None = None) -> dict[str, ChoiceCounts]:
    """Per-condition A/B/NA counts.

    With ``wave`` given, all four of that wave's conditions are present
    (zero-filled); otherwise only observed conditions appear.
    """
    table: dict[str, ChoiceCounts] = {}
    if wave is not None:
        for cond in wave_conditions(wave):
            table[cond.label] = ChoiceCounts()
    for rec in records:
        counts = table.setdefault(_label_of(rec), ChoiceCounts())
        choice = _choice_of(rec)
        if choice not in ("A", "B", "NA"):
            raise DomainError(f"unknown choice {choice!r}")
        setattr(counts, choice, getattr(counts, choice) + 1)
    return dict(sorted(table.items(), key=lambda kv: Condition.from_label(kv[0]).sort_key))


@dataclass
class NamedTest:
    test_name: str
    table: ContingencyTable2x2
    result: ProportionTestResult
    published_chi2: float | None = None


@dataclass
class NamedFit:
    condition: str
    n: int
    fit: LogisticFit


@dataclass
class AnalysisReport:
    wave: str
    counts: dict[str, ChoiceCounts]
    tests: list[NamedTest] = field(default_factory=list)
    fits: list[NamedFit] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def to_records(self) -> list[dict]:
        out: list[dict] = []
        for t in self.tests:
            out.append(
                {
                    "kind": "proportion_test",
                    "test_name": t.test_name,
                    "table": asdict(t.table),
                    "chi2": t.result.chi2,
                    "df": t.result.df,
                    "p": t.result.p_two_tailed,
                    "p1_hat": t.result.p1_hat,
                    "p2_hat": t.result.p2_hat,
                    "corrected": t.result.corrected,
                    "published_chi2": t.published_chi2,
                }
            )
        for f in self.fits:
            fit = f.fit
            out.append(
                {
                    "kind": "logistic_fit",
                    "test_name": f"logit_{f.condition}",
                    "n": f.n,
                    "beta0": fit.beta0,
                    "beta1": fit.beta1,
                    "se0": fit.se0,
                    "se1": fit.se1,
                    "z": fit.z1,
                    "p": fit.p1,
                    "log_lik": fit.log_lik,
                    "iterations": fit.iterations,
                    "converged": fit.converged,
                    "separation_flag": fit.separation_flag,
                    "estimable": fit.estimable,
                    "flags": list(fit.diagnostics),
                }
            )
        for note in self.notes:
            out.append({"kind": "note", "text": note})
        return out

    def to_text(self) -> str:
        lines = [f"wave {self.wave}", ""]
        for label, c in self.counts.items():
            lines.append(f"{label}: A={c.A} B={c.B} NA={c.NA} (n={c.total})")
        lines.append("")
        for t in self.tests:
            r = t.result
            lines.append(
                f"{t.test_name}: chi2={r.chi2:.2f}, df={r.df}, p={r.p_two_tailed:.4g}"
                f" (A rate {r.p1_hat:.4f} vs {r.p2_hat:.4f})"
            )
        lines.append("")
        for f in self.fits:
            fit = f.fit
            if fit.estimable:
                lines.append(
                    f"logit_{f.condition}: beta1={fit.beta1:.4g} per dollar, se={fit.se1:.4g}, "
                    f"z={fit.z1:.4g}, p={fit.p1:.4g}"
                )
            else:
                lines.append(
                    f"logit_{f.condition}: not estimable ({'; '.join(fit.diagnostics)})"
                )
        if self.notes:
            lines.append("")
            lines.extend(f"NOTE: {n}" for n in self.notes)
        return "\n".join(lines) + "\n"


def a_vs_not_a(hypothetical: ChoiceCounts, incentivized: ChoiceCounts) -> ContingencyTable2x2:
    """NA responses count as "not A"."""
    return ContingencyTable2x2(
        hypothetical.A,
        hypothetical.B + hypothetical.NA,
        incentivized.A,
        incentivized.B + incentivized.NA,
    )


def analyze(records: Iterable, wave: Wave | str | int) -> AnalysisReport:
    wave = Wave.parse(wave)
    records = [r for r in records if Condition.from_label(_label_of(r)).wave is wave]
    counts = tabulate(records, wave)
    missing = [label for label, c in counts.items() if c.total == 0]
    if missing:
        raise DomainError(f"records are missing condition(s): {', '.join(missing)}")

    report = AnalysisReport(wave=wave.value, counts=counts)
    for task in Task:
        hyp = Condition(task, Incentive.HYPOTHETICAL, wave)
        inc = Condition(task, Incentive.REAL, wave)
        table = a_vs_not_a(counts[hyp.label], counts[inc.label])
        result = prop_test_2x2(table, continuity=True)
        published = PUBLISHED_CHI2.get((wave.value, task.value))
        name = f"{wave.value}_{task.value}_hypothetical_vs_incentivized"
        report.tests.append(NamedTest(name, table, result, published))
        if published is not None and abs(result.chi2 - published) > PUBLISHED_TOLERANCE:
            report.notes.append(
                f"{name}: computed chi2={result.chi2:.2f} from the observed counts differs from "
                f"the published chi2={published:.2f}; the published figure is not reproducible "
                f"from the published counts (p={result.p_two_tailed:.4g})."
            )

    for cond in wave_conditions(wave):
        subset = [r for r in records if _label_of(r) == cond.label]
        x = [int(_field(r, "endowment_cents")) / 100 for r in subset]
        y = [1 if _choice_of(r) == "A" else 0 for r in subset]
        try:
            fit = fit_logistic(x, y)
        except DomainError as exc:
            fit = LogisticFit(*(math.nan,) * 7, 0, False, True, (str(exc),))
        report.fits.append(NamedFit(cond.label, len(subset), fit))
    return report
