"""Reader-study evaluation suite.

Covers the empirical ROC curve and Mann-Whitney AUC, percentile
bootstrap confidence intervals, paired model-vs-reader deltas at matched
operating points, the DeLong test for correlated AUCs, BIRADS reader and
panel operating points, and tumor-size-matched resampling. Everything is
seeded and deterministic; resample index matrices are drawn up front
from one stream so thread count can never change a result.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NumericError
from .seeds import rng_stream

RECALL_BIRADS = 3  # BIRADS >= 3 means recall
DEFAULT_SIZE_BIN_EDGES = (10.0, 20.0, 50.0)  # mm; four clinical bins


@dataclass(frozen=True, eq=True)
class CaseRecord:
    """One study: label, model score, optional tumor size and reader BIRADS."""

    case_id: str
    label: bool
    score: float
    tumor_size_mm: float | None = None
    reader_birads: dict[str, int] | None = None

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"case {self.case_id}: score {self.score} outside [0, 1]")
        if self.tumor_size_mm is not None:
            if not self.label:
                raise ValueError(f"case {self.case_id}: tumor size on a negative case")
            if not self.tumor_size_mm > 0:
                raise ValueError(f"case {self.case_id}: tumor size must be positive")
        if self.reader_birads is not None:
            for reader, value in self.reader_birads.items():
                if value not in (1, 2, 3, 4, 5):
                    raise ValueError(
                        f"case {self.case_id}: reader {reader} BIRADS {value} not in 1..5"
                    )


def _split_arrays(cases) -> tuple[np.ndarray, np.ndarray]:
    scores = np.array([c.score for c in cases], dtype=np.float64)
    labels = np.array([c.label for c in cases], dtype=bool)
    return scores, labels


# ---------------------------------------------------------------------------
# ROC / AUC
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RocAnalysis:
    """Empirical ROC curve: one point per distinct threshold, plus the
    no-recall endpoint at threshold +inf. auc is the trapezoidal area,
    which equals the Mann-Whitney statistic with half credit for ties."""

    thresholds: tuple[float, ...]
    sensitivity: tuple[float, ...]
    specificity: tuple[float, ...]
    auc: float

    def __post_init__(self):
        k = len(self.thresholds)
        if k != len(self.sensitivity) or k != len(self.specificity):
            raise ValueError("ROC arrays must share a length")
        if k < 2:
            raise ValueError("ROC needs at least two points")
        sens = np.asarray(self.sensitivity)
        spec = np.asarray(self.specificity)
        if np.any(np.diff(sens) < 0) or np.any(np.diff(spec) > 0):
            raise ValueError("ROC points must be monotone")
        if not 0.0 <= self.auc <= 1.0:
            raise ValueError(f"auc {self.auc} outside [0, 1]")


def _curve_points(scores: np.ndarray, labels: np.ndarray):
    """Curve arrays including the threshold=+inf endpoint.

    Returns (thresholds_desc, sens, spec, fpr) where thresholds_desc
    lists every distinct score in descending order and the other three
    arrays are one element longer, starting at the no-recall point
    (sens 0, spec 1).
    """
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs at least one positive and one negative")
    pos_sorted = np.sort(scores[labels])
    neg_sorted = np.sort(scores[~labels])
    thresholds = np.unique(scores)[::-1]
    # count(x >= t) = n - count(x < t), via left bisection
    tp = n_pos - np.searchsorted(pos_sorted, thresholds, side="left")
    fp = n_neg - np.searchsorted(neg_sorted, thresholds, side="left")
    sens = np.concatenate(([0.0], tp / n_pos))
    fpr = np.concatenate(([0.0], fp / n_neg))
    spec = np.concatenate(([1.0], (n_neg - fp) / n_neg))
    return thresholds, sens, spec, fpr


def _trapezoid_auc(fpr: np.ndarray, sens: np.ndarray) -> float:
    terms = []
    for i in range(len(fpr) - 1):
        terms.append((fpr[i + 1] - fpr[i]) * (sens[i] + sens[i + 1]) / 2.0)
    return math.fsum(terms)


def roc_and_auc(cases: list[CaseRecord]) -> RocAnalysis:
    """Empirical ROC over all distinct score thresholds."""
    scores, labels = _split_arrays(cases)
    thresholds, sens, spec, fpr = _curve_points(scores, labels)
    auc = _trapezoid_auc(fpr, sens)
    return RocAnalysis(
        thresholds=(math.inf,) + tuple(thresholds.tolist()),
        sensitivity=tuple(sens.tolist()),
        specificity=tuple(spec.tolist()),
        auc=auc,
    )


def _average_ranks(x: np.ndarray) -> np.ndarray:
    _, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    avg = starts + (counts + 1) / 2.0  # 1-based mean rank of each tie group
    return avg[inverse]


def auc_mann_whitney(scores: np.ndarray, labels: np.ndarray) -> float:
    """Rank-based AUC: P(pos > neg) + 0.5 P(tie). Fast path for resampling."""
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes")
    ranks = _average_ranks(np.asarray(scores, dtype=np.float64))
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _sens_at_spec_arrays(sens: np.ndarray, spec: np.ndarray, target: float) -> float:
    # collapse to the best sensitivity available at each distinct specificity
    spec_rev = spec[::-1]
    sens_rev = sens[::-1]
    xs, first = np.unique(spec_rev, return_index=True)
    return float(np.interp(target, xs, sens_rev[first]))


def sensitivity_at_specificity(roc: RocAnalysis, target_spec: float) -> float:
    """Linear interpolation on the curve's upper envelope, clamped at ends."""
    return _sens_at_spec_arrays(
        np.asarray(roc.sensitivity), np.asarray(roc.specificity), target_spec
    )


def specificity_at_sensitivity(roc: RocAnalysis, target_sens: float) -> float:
    sens = np.asarray(roc.sensitivity)
    spec = np.asarray(roc.specificity)
    xs, first = np.unique(sens, return_index=True)
    return float(np.interp(target_sens, xs, spec[first]))


# ---------------------------------------------------------------------------
# Bootstrap
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BootstrapResult:
    point: float
    lo: float
    hi: float
    n_resamples: int
    n_redraws: int


def bootstrap_ci(
    metric,
    cases: list[CaseRecord],
    n_resamples: int = 10000,
    seed: int = 0,
    *,
    vector_metric=None,
) -> BootstrapResult:
    """Percentile bootstrap (2.5/97.5) of a case-level metric.

    Resamples whole cases with replacement, same size as the input. A
    resample on which the metric raises ValueError (e.g. it drew a
    single class) is redrawn and counted; more than 1% of n_resamples
    needing redraws aborts with NumericError.

    vector_metric, when given, must be the same statistic expressed as
    f(scores, labels) on numpy arrays; it is used for the resampling
    loop while `metric` still produces the point estimate.
    """
    cases = list(cases)
    n = len(cases)
    if n == 0:
        raise ValueError("bootstrap needs at least one case")
    point = float(metric(cases))
    scores, labels = _split_arrays(cases)
    case_arr = np.empty(n, dtype=object)
    for i, c in enumerate(cases):
        case_arr[i] = c

    rng = rng_stream(seed, "bootstrap")
    idx = rng.integers(0, n, size=(n_resamples, n))
    redraw_rng = None
    max_redraws = 0.01 * n_resamples
    n_redraws = 0
    values = np.empty(n_resamples, dtype=np.float64)
    for r in range(n_resamples):
        rows = idx[r]
        while True:
            try:
                if vector_metric is not None:
                    values[r] = vector_metric(scores[rows], labels[rows])
                else:
                    values[r] = metric(list(case_arr[rows]))
                break
            except ValueError:
                n_redraws += 1
                if n_redraws > max_redraws:
                    raise NumericError(
                        f"metric undefined on more than 1% of resamples "
                        f"({n_redraws} redraws in {n_resamples})"
                    )
                if redraw_rng is None:
                    redraw_rng = rng_stream(seed, "bootstrap-redraw")
                rows = redraw_rng.integers(0, n, size=n)
    lo, hi = np.percentile(values, [2.5, 97.5])
    return BootstrapResult(
        point=point, lo=float(lo), hi=float(hi), n_resamples=n_resamples, n_redraws=n_redraws
    )


# ---------------------------------------------------------------------------
# Paired model-vs-reader delta
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PairedDeltaResult:
    p_value: float
    point_delta: float
    n_redraws: int
    metric: str


def _reader_recall_matrix(cases: list[CaseRecord], reader_ids: list[str]) -> np.ndarray:
    recalls = np.empty((len(cases), len(reader_ids)), dtype=bool)
    for i, case in enumerate(cases):
        birads = case.reader_birads or {}
        for j, reader in enumerate(reader_ids):
            if reader not in birads:
                raise ValueError(f"case {case.case_id} missing read from {reader}")
            recalls[i, j] = birads[reader] >= RECALL_BIRADS
    return recalls


def _matched_delta(
    scores: np.ndarray, labels: np.ndarray, recalls: np.ndarray, metric: str
) -> float:
    """Mean over readers of (model metric at that reader's operating point)
    minus the mean reader metric, on one dataset."""
    _, sens, spec, _ = _curve_points(scores, labels)
    pos = labels
    neg = ~labels
    if not pos.any() or not neg.any():
        raise ValueError("both classes required")
    reader_sens = recalls[pos].mean(axis=0)
    reader_spec = 1.0 - recalls[neg].mean(axis=0)
    if metric == "sensitivity":
        model_vals = [_sens_at_spec_arrays(sens, spec, s) for s in reader_spec]
        reader_vals = reader_sens
    elif metric == "specificity":
        xs, first = np.unique(sens, return_index=True)
        model_vals = [float(np.interp(t, xs, spec[first])) for t in reader_sens]
        reader_vals = reader_spec
    else:
        raise ValueError(f"unknown matched metric {metric!r}")
    return float(np.mean(model_vals) - np.mean(reader_vals))


def paired_delta_pvalue(
    cases: list[CaseRecord],
    reader_ids: list[str],
    n_resamples: int = 10000,
    seed: int = 0,
    metric: str = "sensitivity",
) -> PairedDeltaResult:
    """Bootstrap p-value for model-below-readers at matched operating points.

    Each resample recomputes every reader's operating point and the model
    metric matched to it; p is the fraction of resamples where the mean
    difference (model - readers) is negative.
    """
    scores, labels = _split_arrays(cases)
    recalls = _reader_recall_matrix(cases, reader_ids)
    point = _matched_delta(scores, labels, recalls, metric)

    n = len(cases)
    rng = rng_stream(seed, "paired-delta")
    idx = rng.integers(0, n, size=(n_resamples, n))
    redraw_rng = None
    n_redraws = 0
    max_redraws = 0.01 * n_resamples
    below = 0
    for r in range(n_resamples):
        rows = idx[r]
        while True:
            try:
                delta = _matched_delta(scores[rows], labels[rows], recalls[rows], metric)
                break
            except ValueError:
                n_redraws += 1
                if n_redraws > max_redraws:
                    raise NumericError(
                        f"matched delta undefined on more than 1% of resamples "
                        f"({n_redraws} redraws in {n_resamples})"
                    )
                if redraw_rng is None:
                    redraw_rng = rng_stream(seed, "paired-delta-redraw")
                rows = redraw_rng.integers(0, n, size=n)
        if delta < 0:
            below += 1
    return PairedDeltaResult(
        p_value=below / n_resamples, point_delta=point, n_redraws=n_redraws, metric=metric
    )


# ---------------------------------------------------------------------------
# DeLong test
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DelongResult:
    auc_a: float
    auc_b: float
    z: float
    p: float
    degenerate: bool = False


def _structural_components(scores: np.ndarray, labels: np.ndarray):
    pos = scores[labels]
    neg = scores[~labels]
    psi = (pos[:, None] > neg[None, :]) + 0.5 * (pos[:, None] == neg[None, :])
    return psi.mean(axis=1), psi.mean(axis=0), psi.mean()


def delong_test(scores_a, scores_b, labels) -> DelongResult:
    """Two-sided DeLong comparison of two AUCs measured on the same cases.

    Identical score vectors short-circuit to z=0, p=1. A zero or
    undefined variance estimate with unequal AUCs is reported as
    degenerate with p = nan.
    """
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if a.shape != y.shape or b.shape != y.shape:
        raise ValueError("scores and labels must be the same length")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("DeLong test needs both classes")

    v10_a, v01_a, auc_a = _structural_components(a, y)
    v10_b, v01_b, auc_b = _structural_components(b, y)
    if np.array_equal(a, b):
        return DelongResult(auc_a=float(auc_a), auc_b=float(auc_b), z=0.0, p=1.0)

    with np.errstate(invalid="ignore", divide="ignore"):
        s10 = np.cov(np.stack([v10_a, v10_b]), ddof=1) if n_pos > 1 else np.full((2, 2), np.nan)
        s01 = np.cov(np.stack([v01_a, v01_b]), ddof=1) if n_neg > 1 else np.full((2, 2), np.nan)
    var = (s10[0, 0] + s10[1, 1] - 2 * s10[0, 1]) / n_pos + (
        s01[0, 0] + s01[1, 1] - 2 * s01[0, 1]
    ) / n_neg

    if not math.isfinite(var) or var <= 0:
        if auc_a == auc_b:
            return DelongResult(auc_a=float(auc_a), auc_b=float(auc_b), z=0.0, p=1.0)
        return DelongResult(
            auc_a=float(auc_a), auc_b=float(auc_b), z=math.nan, p=math.nan, degenerate=True
        )
    z = float((auc_a - auc_b) / math.sqrt(var))
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return DelongResult(auc_a=float(auc_a), auc_b=float(auc_b), z=z, p=p)


# ---------------------------------------------------------------------------
# Readers and panels
# ---------------------------------------------------------------------------


def reader_operating_point(cases: list[CaseRecord], reader_id: str) -> tuple[float, float]:
    """(sensitivity, specificity) of one reader under the recall-at-3 rule."""
    return reader_panel_combine(cases, [reader_id])


def reader_panel_combine(
    cases: list[CaseRecord], reader_subset: list[str]
) -> tuple[float, float]:
    """Panel operating point: recall iff the mean BIRADS is >= 3 (inclusive)."""
    if not reader_subset:
        raise ValueError("panel needs at least one reader")
    tp = fn = tn = fp = 0
    for case in cases:
        birads = case.reader_birads or {}
        values = []
        for reader in reader_subset:
            if reader not in birads:
                raise ValueError(f"case {case.case_id} missing read from {reader}")
            values.append(birads[reader])
        recall = (math.fsum(values) / len(values)) >= RECALL_BIRADS
        if case.label:
            tp += recall
            fn += not recall
        else:
            fp += recall
            tn += not recall
    if tp + fn == 0 or tn + fp == 0:
        raise ValueError("panel evaluation needs both classes")
    return tp / (tp + fn), tn / (tn + fp)


@dataclass(frozen=True)
class PanelPoint:
    readers: tuple[str, ...]
    sensitivity: float
    specificity: float


def enumerate_panels(cases: list[CaseRecord], reader_ids: list[str]) -> list[PanelPoint]:
    """All single readers plus every panel of size 2..k, in deterministic order."""
    readers = sorted(reader_ids)
    points = []
    for size in range(1, len(readers) + 1):
        for combo in itertools.combinations(readers, size):
            sens, spec = reader_panel_combine(cases, list(combo))
            points.append(PanelPoint(readers=combo, sensitivity=sens, specificity=spec))
    return points


# ---------------------------------------------------------------------------
# Tumor-size-matched resampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SizeHistogram:
    """Target tumor-size distribution over bins split at bin_edges (mm).

    len(shares) == len(bin_edges) + 1; bin b holds sizes in
    [edge[b-1], edge[b]) with open ends.
    """

    bin_edges: tuple[float, ...] = DEFAULT_SIZE_BIN_EDGES
    shares: tuple[float, ...] = ()

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=np.float64)
        if edges.size == 0 or np.any(np.diff(edges) <= 0):
            raise ValueError("bin_edges must be ascending and nonempty")
        if len(self.shares) != len(self.bin_edges) + 1:
            raise ValueError(
                f"need {len(self.bin_edges) + 1} shares, got {len(self.shares)}"
            )
        shares = np.asarray(self.shares, dtype=np.float64)
        if np.any(shares < 0):
            raise ValueError("shares must be nonnegative")
        if abs(shares.sum() - 1.0) > 1e-9:
            raise ValueError(f"shares must sum to 1, got {shares.sum()}")

    @property
    def n_bins(self) -> int:
        return len(self.bin_edges) + 1

    def bin_of(self, sizes: np.ndarray) -> np.ndarray:
        return np.digitize(sizes, self.bin_edges)


def source_histogram(sizes: np.ndarray, bin_edges=DEFAULT_SIZE_BIN_EDGES) -> SizeHistogram:
    """Empirical SizeHistogram of the given sizes."""
    bins = np.digitize(sizes, bin_edges)
    counts = np.bincount(bins, minlength=len(bin_edges) + 1)
    return SizeHistogram(bin_edges=tuple(bin_edges), shares=tuple(counts / counts.sum()))


@dataclass(frozen=True)
class SizeMatchedResult:
    mean_auc: float
    sd_auc: float
    mean_tv_distance: float
    n_populations: int


def size_matched_auc(
    cases: list[CaseRecord],
    target: SizeHistogram,
    n_populations: int = 5000,
    seed: int = 0,
) -> SizeMatchedResult:
    """Mean and SD of AUC over resampled populations whose positive tumor
    sizes approximate the target histogram.

    Positives are drawn with replacement with per-case probability
    proportional to target share / source share of their size bin;
    negatives are drawn uniformly with replacement. Also reports the mean
    total-variation distance between resampled size histograms and the
    target.
    """
    pos = [c for c in cases if c.label]
    neg = [c for c in cases if not c.label]
    if not pos or not neg:
        raise ValueError("size matching needs both classes")
    for c in pos:
        if c.tumor_size_mm is None:
            raise ValueError(f"positive case {c.case_id} lacks a tumor size")

    sizes = np.array([c.tumor_size_mm for c in pos], dtype=np.float64)
    pos_scores = np.array([c.score for c in pos], dtype=np.float64)
    neg_scores = np.array([c.score for c in neg], dtype=np.float64)
    bins = target.bin_of(sizes)
    counts = np.bincount(bins, minlength=target.n_bins)
    shares = np.asarray(target.shares, dtype=np.float64)

    for b in range(target.n_bins):
        if shares[b] > 0 and counts[b] == 0:
            lo = "-inf" if b == 0 else str(target.bin_edges[b - 1])
            hi = "+inf" if b == target.n_bins - 1 else str(target.bin_edges[b])
            raise ValueError(
                f"target bin [{lo}, {hi}) mm has share {shares[b]} but no source positives"
            )

    n_pos, n_neg = len(pos), len(neg)
    bin_weight = np.zeros(target.n_bins, dtype=np.float64)
    nz = counts > 0
    bin_weight[nz] = shares[nz] / (counts[nz] / n_pos)
    w = bin_weight[bins]
    total = w.sum()
    if total <= 0:
        raise ValueError("all positives fall in zero-share bins")
    w = w / total

    rng = rng_stream(seed, "size-matched")
    pos_idx = rng.choice(n_pos, size=(n_populations, n_pos), replace=True, p=w)
    neg_idx = rng.integers(0, n_neg, size=(n_populations, n_neg))

    labels = np.concatenate([np.ones(n_pos, dtype=bool), np.zeros(n_neg, dtype=bool)])
    aucs = np.empty(n_populations, dtype=np.float64)
    tvs = np.empty(n_populations, dtype=np.float64)
    for r in range(n_populations):
        sp = pos_scores[pos_idx[r]]
        sn = neg_scores[neg_idx[r]]
        aucs[r] = auc_mann_whitney(np.concatenate([sp, sn]), labels)
        got = np.bincount(bins[pos_idx[r]], minlength=target.n_bins) / n_pos
        tvs[r] = 0.5 * np.abs(got - shares).sum()
    return SizeMatchedResult(
        mean_auc=float(aucs.mean()),
        sd_auc=float(aucs.std(ddof=1)) if n_populations > 1 else 0.0,
        mean_tv_distance=float(tvs.mean()),
        n_populations=n_populations,
    )


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def cases_to_csv(cases: list[CaseRecord]) -> str:
    reader_ids = sorted({r for c in cases for r in (c.reader_birads or {})})
    has_sizes = any(c.tumor_size_mm is not None for c in cases)
    header = ["case_id", "label", "score"]
    if has_sizes:
        header.append("tumor_size_mm")
    header += [f"birads_{r}" for r in reader_ids]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for c in cases:
        row = [c.case_id, int(c.label), repr(c.score)]
        if has_sizes:
            row.append("" if c.tumor_size_mm is None else repr(c.tumor_size_mm))
        birads = c.reader_birads or {}
        row += ["" if r not in birads else birads[r] for r in reader_ids]
        writer.writerow(row)
    return buf.getvalue()


def cases_from_csv(text: str) -> list[CaseRecord]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        raise ValueError("empty cases CSV")
    header = [h.strip() for h in header]
    required = ["case_id", "label", "score"]
    for col in required:
        if col not in header:
            raise ValueError(f"cases CSV missing column {col!r}")
    col = {name: i for i, name in enumerate(header)}
    reader_cols = [(name[len("birads_"):], i) for i, name in enumerate(header) if name.startswith("birads_")]
    out = []
    for row in reader:
        if not row:
            continue
        label_text = row[col["label"]].strip().lower()
        if label_text in ("1", "true"):
            label = True
        elif label_text in ("0", "false"):
            label = False
        else:
            raise ValueError(f"bad label {row[col['label']]!r}")
        size = None
        if "tumor_size_mm" in col and row[col["tumor_size_mm"]].strip() != "":
            size = float(row[col["tumor_size_mm"]])
        birads = {}
        for reader_id, i in reader_cols:
            if row[i].strip() != "":
                birads[reader_id] = int(row[i])
        out.append(
            CaseRecord(
                case_id=row[col["case_id"]],
                label=label,
                score=float(row[col["score"]]),
                tumor_size_mm=size,
                reader_birads=birads or None,
            )
        )
    return out


def write_cases_csv(cases: list[CaseRecord], path: str | Path) -> None:
    Path(path).write_text(cases_to_csv(cases))


def read_cases_csv(path: str | Path) -> list[CaseRecord]:
    return cases_from_csv(Path(path).read_text())


def write_roc_csv(roc: RocAnalysis, path: str | Path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["threshold", "sensitivity", "specificity"])
    for t, se, sp in zip(roc.thresholds, roc.sensitivity, roc.specificity):
        writer.writerow([repr(t) if math.isfinite(t) else "inf", repr(se), repr(sp)])
    Path(path).write_text(buf.getvalue())


def write_panels_csv(points: list[PanelPoint], path: str | Path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["panel", "size", "sensitivity", "specificity"])
    for pt in points:
        writer.writerow(
            ["+".join(pt.readers), len(pt.readers), repr(pt.sensitivity), repr(pt.specificity)]
        )
    Path(path).write_text(buf.getvalue())


_SVG_COLORS = ("#1f6feb", "#d1242f", "#1a7f37", "#9a6700", "#8250df")


def write_roc_svg(
    curves: list[tuple[str, RocAnalysis]],
    path: str | Path,
    points: list[tuple[str, float, float]] | None = None,
) -> None:
    """Minimal deterministic SVG plot of ROC curves in (FPR, TPR) axes.

    points: optional (label, sensitivity, specificity) markers, e.g.
    reader operating points.
    """
    size, margin = 480, 48
    span = size - 2 * margin

    def px(fpr: float) -> str:
        return f"{margin + span * fpr:.2f}"

    def py(tpr: float) -> str:
        return f"{size - margin - span * tpr:.2f}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
        f'<rect x="{margin}" y="{margin}" width="{span}" height="{span}" '
        'fill="none" stroke="#444" stroke-width="1"/>',
        f'<line x1="{px(0.0)}" y1="{py(0.0)}" x2="{px(1.0)}" y2="{py(1.0)}" '
        'stroke="#bbb" stroke-dasharray="4 4"/>',
    ]
    for frac in (0.25, 0.5, 0.75):
        parts.append(
            f'<line x1="{px(frac)}" y1="{py(0.0)}" x2="{px(frac)}" y2="{py(1.0)}" '
            'stroke="#eee"/>'
        )
        parts.append(
            f'<line x1="{px(0.0)}" y1="{py(frac)}" x2="{px(1.0)}" y2="{py(frac)}" '
            'stroke="#eee"/>'
        )
    for k, (label, roc) in enumerate(curves):
        color = _SVG_COLORS[k % len(_SVG_COLORS)]
        coords = " ".join(
            f"{px(1.0 - sp)},{py(se)}"
            for se, sp in zip(roc.sensitivity, roc.specificity)
        )
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{margin + 8}" y="{margin + 16 + 14 * k}" font-size="11" '
            f'fill="{color}">{label} (AUC {roc.auc:.3f})</text>'
        )
    for label, sens, spec in points or []:
        parts.append(
            f'<circle cx="{px(1.0 - spec)}" cy="{py(sens)}" r="3" fill="#24292f"/>'
        )
        parts.append(
            f'<text x="{float(px(1.0 - spec)) + 5:.2f}" y="{float(py(sens)) - 5:.2f}" '
            f'font-size="9" fill="#24292f">{label}</text>'
        )
    parts.append(
        f'<text x="{size / 2:.0f}" y="{size - 12}" font-size="11" text-anchor="middle" '
        'fill="#444">false positive rate</text>'
    )
    parts.append(
        f'<text x="14" y="{size / 2:.0f}" font-size="11" text-anchor="middle" '
        f'fill="#444" transform="rotate(-90 14 {size / 2:.0f})">sensitivity</text>'
    )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
