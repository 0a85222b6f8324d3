"""Early and late multimodal fusion with missing-modality handling.

Modality order is fixed as (clinical, radiology, histology) and recorded
in output headers. Early fusion either concatenates the raw embeddings
(zero-imputing absent modalities, with one presence-mask bit appended per
modality) or mean-pools per-modality projections over the modalities that
are actually present. Late fusion combines per-modality probabilities by
a weight vector renormalized over present modalities, or by a small
learned head over the probability-plus-mask vector.
"""

import numpy as np
from dataclasses import dataclass, field

from .errors import FusionError, ValidationError
from .io import FeatureTable, default_feature_names
from .metrics import EvalReport, MetricSummary, evaluate
from .neural import (
    MlpModel,
    MlpSpec,
    TrainConfig,
    TrainResult,
    predict_probs,
    train,
)
from .tabular import stratified_split_indices

MODALITIES = ("clinical", "radiology", "histology")
MODALITY_DIMS = {"clinical": 64, "radiology": 512, "histology": 1024}

STRATEGIES = (
    "early-concat",
    "early-mean-pool",
    "late-weighted-sum",
    "late-learned",
)
MISSING_POLICIES = ("renormalize", "zero-impute")


@dataclass(frozen=True)
class FusionPlan:
    strategy: str = "early-concat"
    missing_policy: str = "renormalize"
    projection_dim: int = 128  # early-mean-pool only
    weights: dict | None = None  # late-weighted-sum: modality -> weight
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise FusionError(f"unknown fusion strategy {self.strategy!r}")
        if self.missing_policy not in MISSING_POLICIES:
            raise FusionError(f"unknown missing policy {self.missing_policy!r}")
        if self.projection_dim < 1:
            raise FusionError(f"projection_dim must be positive, got {self.projection_dim}")
        if self.weights is not None:
            vals = list(self.weights.values())
            if any(w < 0 for w in vals) or not any(w > 0 for w in vals):
                raise FusionError("weights must be nonnegative and not all zero")


@dataclass
class ModalityBundle:
    """Optional per-modality feature tables and probability tables."""

    tables: dict[str, FeatureTable | None] = field(default_factory=dict)
    probs: dict[str, dict[str, float]] = field(default_factory=dict)

    def __post_init__(self):
        for name in self.tables:
            if name not in MODALITIES:
                raise FusionError(f"unknown modality {name!r}, expected {MODALITIES}")
        for name in self.probs:
            if name not in MODALITIES:
                raise FusionError(f"unknown modality {name!r}, expected {MODALITIES}")

    def present_modalities(self) -> tuple[str, ...]:
        return tuple(m for m in MODALITIES if self.tables.get(m) is not None)

    def patients(self) -> tuple[str, ...]:
        """Union of patient ids, ordered by first appearance across the
        fixed modality order."""
        seen: dict[str, None] = {}
        for m in MODALITIES:
            table = self.tables.get(m)
            if table is not None:
                for pid in table.ids:
                    seen.setdefault(pid, None)
        return tuple(seen)

    def presence(self, patients=None) -> np.ndarray:
        """(n_patients, 3) float mask: 1.0 where the modality has a row."""
        if patients is None:
            patients = self.patients()
        mask = np.zeros((len(patients), len(MODALITIES)))
        for j, m in enumerate(MODALITIES):
            table = self.tables.get(m)
            if table is None:
                continue
            have = set(table.ids)
            for i, pid in enumerate(patients):
                if pid in have:
                    mask[i, j] = 1.0
        return mask


def bundle_widths(bundle: ModalityBundle) -> dict[str, int]:
    return {
        m: bundle.tables[m].width
        for m in MODALITIES
        if bundle.tables.get(m) is not None
    }


def _check_some_modality(bundle: ModalityBundle, patients, mask) -> None:
    orphans = [p for p, row in zip(patients, mask) if row.sum() == 0]
    if orphans:
        raise FusionError(
            f"patients with every modality missing: {', '.join(orphans[:5])}"
            + ("..." if len(orphans) > 5 else "")
        )


def early_concat(bundle: ModalityBundle, patients=None) -> FeatureTable:
    """Concatenate modality blocks (fixed order) + presence-mask bits.

    Missing modalities zero-impute their block; the mask bit lets a
    downstream head distinguish imputed zeros from genuine zeros.
    Slicing the output at the block offsets recovers each input exactly.
    """
    if patients is None:
        patients = bundle.patients()
    if not patients:
        raise FusionError("bundle has no patients")
    mask = bundle.presence(patients)
    _check_some_modality(bundle, patients, mask)
    present = bundle.present_modalities()
    blocks = []
    names: list[str] = []
    for m in present:
        table = bundle.tables[m]
        block = np.zeros((len(patients), table.width))
        idx = table.index()
        for i, pid in enumerate(patients):
            row = idx.get(pid)
            if row is not None:
                block[i] = table.data[row]
        blocks.append(block)
        names.extend(f"{m}:{c}" for c in table.names)
    mask_cols = [j for j, m in enumerate(MODALITIES) if m in present]
    blocks.append(mask[:, mask_cols])
    names.extend(f"mask:{m}" for m in present)
    return FeatureTable(tuple(patients), tuple(names), np.hstack(blocks))


def concat_block_slices(bundle: ModalityBundle) -> dict[str, slice]:
    """Column slice of each modality block inside the early-concat output."""
    out = {}
    offset = 0
    for m in bundle.present_modalities():
        width = bundle.tables[m].width
        out[m] = slice(offset, offset + width)
        offset += width
    out["mask"] = slice(offset, offset + len(bundle.present_modalities()))
    return out


def random_projections(widths: dict[str, int], out_dim: int, seed: int = 0) -> dict:
    """Seeded Gaussian projections (W, b=0), scaled by 1/sqrt(out_dim)."""
    projections = {}
    for m in MODALITIES:
        if m not in widths:
            continue
        rng = np.random.default_rng(np.random.SeedSequence([seed, MODALITIES.index(m)]))
        W = rng.normal(0.0, 1.0, size=(widths[m], out_dim)) / np.sqrt(out_dim)
        projections[m] = (W, np.zeros(out_dim))
    return projections


def trained_projections(
    bundle: ModalityBundle,
    labels: dict[str, int],
    out_dim: int,
    seed: int = 0,
    epochs: int = 30,
) -> dict:
    """Per-modality affine maps taken from the first layer of a small
    classifier trained on that modality's labeled rows."""
    projections = {}
    for m in bundle.present_modalities():
        table = bundle.tables[m]
        ids = [p for p in table.ids if p in labels]
        if len(ids) < 8:
            raise FusionError(f"modality {m!r} has too few labeled rows to fit a projection")
        sub = table.restrict(ids)
        y = np.asarray([labels[p] for p in ids], dtype=np.int64)
        spec = MlpSpec(
            layer_sizes=(table.width, out_dim, 2),
            dropout=(0.0,),
            batch_norm=(False,),
            output="softmax",
        )
        mseed = seed * 1009 + MODALITIES.index(m)
        model = MlpModel.init(spec, seed=mseed)
        tr_idx, val_idx = stratified_split_indices(y, (0.8, 0.2), seed=mseed)
        cfg = TrainConfig(loss="weighted_ce", epochs=epochs, seed=mseed)
        result = train(model, sub.data[tr_idx], y[tr_idx], sub.data[val_idx], y[val_idx], cfg)
        projections[m] = (result.model.weights[0].copy(), result.model.biases[0].copy())
    return projections


def early_mean_pool(bundle: ModalityBundle, projections: dict, patients=None) -> FeatureTable:
    """Mean over PRESENT modalities of per-modality projected vectors."""
    if patients is None:
        patients = bundle.patients()
    if not patients:
        raise FusionError("bundle has no patients")
    mask = bundle.presence(patients)
    _check_some_modality(bundle, patients, mask)
    present = bundle.present_modalities()
    dims = set()
    for m in present:
        if m not in projections:
            raise FusionError(f"no projection supplied for modality {m!r}")
        W, b = projections[m]
        dims.add(np.asarray(W).shape[1])
    if len(dims) != 1:
        raise FusionError(f"projections disagree on output dim: {sorted(dims)}")
    (dim,) = dims
    total = np.zeros((len(patients), dim))
    counts = np.zeros(len(patients))
    for m in present:
        table = bundle.tables[m]
        W, b = projections[m]
        W = np.asarray(W, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if W.shape[0] != table.width:
            raise FusionError(
                f"projection for {m!r} expects width {W.shape[0]}, table has {table.width}"
            )
        projected = table.data @ W + b
        idx = table.index()
        for i, pid in enumerate(patients):
            row = idx.get(pid)
            if row is not None:
                total[i] += projected[row]
                counts[i] += 1.0
    pooled = total / counts[:, None]
    return FeatureTable(tuple(patients), default_feature_names(dim), pooled)


# ---------------------------------------------------------------------------
# late fusion
# ---------------------------------------------------------------------------

def weights_from_balanced_accuracy(bal_accs: dict[str, float]) -> dict[str, float]:
    """Normalize per-modality validation balanced accuracies to sum 1."""
    total = sum(bal_accs.values())
    if total <= 0:
        raise FusionError("balanced accuracies must have a positive sum")
    return {m: v / total for m, v in bal_accs.items()}


def late_weighted_sum(
    prob_tables: dict[str, dict[str, float]],
    weights: dict[str, float],
    missing_policy: str = "renormalize",
    patients=None,
) -> dict[str, float]:
    """Weighted average of per-modality probabilities per patient.

    "renormalize" divides by the weight mass of the modalities present
    for that patient; "zero-impute" treats absent probabilities as 0 and
    divides by the total weight mass. Output stays in [0, 1].
    """
    if missing_policy not in MISSING_POLICIES:
        raise FusionError(f"unknown missing policy {missing_policy!r}")
    if patients is None:
        seen: dict[str, None] = {}
        for m in MODALITIES:
            for pid in prob_tables.get(m, {}):
                seen.setdefault(pid, None)
        patients = tuple(seen)
    for m, table in prob_tables.items():
        bad = [p for p, v in table.items() if not 0.0 <= v <= 1.0]
        if bad:
            raise FusionError(f"modality {m!r} has probabilities outside [0, 1]: {bad[:3]}")
    total_mass = sum(weights.get(m, 0.0) for m in prob_tables)
    fused: dict[str, float] = {}
    for pid in patients:
        num = 0.0
        mass = 0.0
        for m in MODALITIES:
            table = prob_tables.get(m)
            if table is None or pid not in table:
                continue
            w = weights.get(m, 0.0)
            num += w * table[pid]
            mass += w
        if mass == 0.0:
            raise FusionError(
                f"patient {pid!r}: all present modalities carry zero weight"
            )
        denom = mass if missing_policy == "renormalize" else total_mass
        fused[pid] = num / denom
    return fused


def late_learned(
    prob_tables: dict[str, dict[str, float]],
    labels: dict[str, int],
    seed: int = 0,
    epochs: int = 100,
    hidden: int = 8,
    patients=None,
) -> tuple[TrainResult, dict[str, float]]:
    """Train a 1-hidden-layer head over [probabilities + presence mask].

    Missing probabilities enter as 0.0 with their mask bit cleared.
    Selection is on validation balanced accuracy; deterministic per seed.
    """
    if patients is None:
        seen: dict[str, None] = {}
        for m in MODALITIES:
            for pid in prob_tables.get(m, {}):
                seen.setdefault(pid, None)
        patients = tuple(seen)
    unlabeled = [p for p in patients if p not in labels]
    if unlabeled:
        raise FusionError(f"patients without labels: {', '.join(unlabeled[:5])}")
    X = _prob_features(prob_tables, patients)
    y = np.asarray([labels[p] for p in patients], dtype=np.int64)
    spec = MlpSpec(
        layer_sizes=(X.shape[1], hidden, 1),
        dropout=(0.0,),
        batch_norm=(False,),
        output="sigmoid",
    )
    model = MlpModel.init(spec, seed=seed)
    tr_idx, val_idx = stratified_split_indices(y, (0.8, 0.2), seed=seed)
    cfg = TrainConfig(
        loss="bce_pos",
        pos_weight=None,
        epochs=epochs,
        selection="val_balanced_accuracy",
        seed=seed,
    )
    result = train(model, X[tr_idx], y[tr_idx], X[val_idx], y[val_idx], cfg)
    fused_probs = predict_probs(result.model, X)
    return result, {p: float(v) for p, v in zip(patients, fused_probs)}


def _prob_features(prob_tables: dict[str, dict[str, float]], patients) -> np.ndarray:
    X = np.zeros((len(patients), 2 * len(MODALITIES)))
    for j, m in enumerate(MODALITIES):
        table = prob_tables.get(m, {})
        for i, pid in enumerate(patients):
            if pid in table:
                X[i, j] = table[pid]
                X[i, len(MODALITIES) + j] = 1.0
    return X


def prob_feature_vector(prob_tables: dict[str, dict[str, float]], patient: str) -> np.ndarray:
    """The learned head's input for one patient (probs then mask bits)."""
    return _prob_features(prob_tables, [patient])[0]


# ---------------------------------------------------------------------------
# two-stage experiment: unimodal baselines, then fusion
# ---------------------------------------------------------------------------

BASELINE_ROW_NAMES = {
    "clinical": "Clinical MLP Baseline",
    "radiology": "Radiology MLP Baseline",
    "histology": "Histology MLP Baseline",
}
FUSION_ROW_NAMES = {
    "early-concat": "Early Fusion (Concatenation)",
    "early-mean-pool": "Early Fusion (Mean Pool)",
    "late-weighted-sum": "Late Fusion (Weighted Sum)",
    "late-learned": "Late Fusion (Learned)",
}


def default_baseline_spec(width: int) -> MlpSpec:
    """2-hidden-layer softmax classifier with dropout and label smoothing."""
    return MlpSpec(
        layer_sizes=(width, 64, 32, 2),
        dropout=(0.2, 0.2),
        batch_norm=(False, False),
        output="softmax",
        label_smoothing=0.05,
    )


def default_baseline_config(seed: int) -> TrainConfig:
    return TrainConfig(
        loss="weighted_ce",
        epochs=40,
        batch_size=32,
        selection="val_balanced_accuracy",
        seed=seed,
    )


@dataclass
class UnimodalOutcome:
    modality: str
    result: TrainResult
    test_report: EvalReport
    val_bal_acc: float
    probs: dict[str, float]  # every patient of this modality


@dataclass
class FusionOutcome:
    strategy: str
    test_report: EvalReport
    details: dict = field(default_factory=dict)


@dataclass
class ExperimentResult:
    patients: tuple[str, ...]
    split_ids: dict[str, tuple[str, ...]]  # train / val / test
    unimodal: dict[str, UnimodalOutcome]
    fused: FusionOutcome

    def comparison_rows(self) -> list[tuple[str, MetricSummary]]:
        rows = [
            (BASELINE_ROW_NAMES[m], o.test_report.metrics)
            for m, o in self.unimodal.items()
        ]
        rows.append((FUSION_ROW_NAMES[self.fused.strategy], self.fused.test_report.metrics))
        return rows


def _split_modality(table: FeatureTable, labels, split_ids):
    """Per-split (X, y) restricted to the patients this modality covers."""
    have = set(table.ids)
    out = {}
    for name, ids in split_ids.items():
        sub_ids = [p for p in ids if p in have]
        sub = table.restrict(sub_ids)
        y = np.asarray([labels[p] for p in sub_ids], dtype=np.int64)
        out[name] = (sub_ids, sub.data, y)
    return out


def _require_two_classes(y: np.ndarray, what: str) -> None:
    if np.unique(y).size < 2:
        raise ValidationError(
            f"{what} does not contain both classes; enlarge the split or cohort"
        )


def run_fusion_experiment(
    bundle: ModalityBundle,
    labels: dict[str, int],
    plan: FusionPlan,
    baseline_specs: dict[str, MlpSpec] | None = None,
    baseline_cfgs: dict[str, TrainConfig] | None = None,
    fractions=(0.7, 0.15, 0.15),
    seed: int = 0,
    threshold: float = 0.5,
) -> ExperimentResult:
    """Shared-split two-stage run: unimodal baselines, then one fusion.

    One patient-level stratified split drives every model. Baselines
    train on the train fold and select on validation balanced accuracy;
    late fusion derives weights from (or trains its head on) the
    validation fold; every reported score is on the untouched test fold.
    """
    patients = bundle.patients()
    if not patients:
        raise FusionError("bundle has no patients")
    orphans = [p for p in patients if p not in labels]
    if orphans:
        raise FusionError(
            f"patients without labels: {', '.join(orphans[:5])}"
            + ("..." if len(orphans) > 5 else "")
        )
    y_all = np.asarray([labels[p] for p in patients], dtype=np.int64)
    tr, va, te = stratified_split_indices(y_all, fractions, seed=seed)
    split_ids = {
        "train": tuple(patients[i] for i in tr),
        "val": tuple(patients[i] for i in va),
        "test": tuple(patients[i] for i in te),
    }

    unimodal: dict[str, UnimodalOutcome] = {}
    prob_tables: dict[str, dict[str, float]] = {}
    for m in bundle.present_modalities():
        table = bundle.tables[m]
        parts = _split_modality(table, labels, split_ids)
        (_, X_tr, y_tr), (_, X_va, y_va), (te_ids, X_te, y_te) = (
            parts["train"],
            parts["val"],
            parts["test"],
        )
        _require_two_classes(y_tr, f"{m} train fold")
        _require_two_classes(y_va, f"{m} validation fold")
        mseed = seed * 7919 + MODALITIES.index(m)
        spec = (baseline_specs or {}).get(m) or default_baseline_spec(table.width)
        cfg = (baseline_cfgs or {}).get(m) or default_baseline_config(mseed)
        model = MlpModel.init(spec, seed=mseed)
        result = train(model, X_tr, y_tr, X_va, y_va, cfg)
        test_probs = predict_probs(result.model, X_te)
        report = evaluate(y_te, test_probs, threshold)
        all_probs = predict_probs(result.model, table.data)
        unimodal[m] = UnimodalOutcome(
            modality=m,
            result=result,
            test_report=report,
            val_bal_acc=result.best_val_bal_acc,
            probs={p: float(v) for p, v in zip(table.ids, all_probs)},
        )
        prob_tables[m] = unimodal[m].probs

    test_ids = split_ids["test"]
    y_test = np.asarray([labels[p] for p in test_ids], dtype=np.int64)

    if plan.strategy in ("early-concat", "early-mean-pool"):
        if plan.strategy == "early-concat":
            fused_table = early_concat(bundle, patients=patients)
            details = {"width": fused_table.width}
        else:
            train_labels = {p: labels[p] for p in split_ids["train"]}
            projections = trained_projections(
                bundle, train_labels, plan.projection_dim, seed=plan.seed
            )
            fused_table = early_mean_pool(bundle, projections, patients=patients)
            details = {"projection_dim": plan.projection_dim}
        idx = fused_table.index()
        fseed = seed * 7919 + 101
        spec = default_baseline_spec(fused_table.width)
        cfg = default_baseline_config(fseed)
        rows = lambda ids: fused_table.data[[idx[p] for p in ids]]
        y_of = lambda ids: np.asarray([labels[p] for p in ids], dtype=np.int64)
        model = MlpModel.init(spec, seed=fseed)
        result = train(
            model,
            rows(split_ids["train"]),
            y_of(split_ids["train"]),
            rows(split_ids["val"]),
            y_of(split_ids["val"]),
            cfg,
        )
        fused_probs = predict_probs(result.model, rows(test_ids))
        fused_report = evaluate(y_test, fused_probs, threshold)
        details["best_epoch"] = result.best_epoch
        fused = FusionOutcome(plan.strategy, fused_report, details)
    elif plan.strategy == "late-weighted-sum":
        if plan.weights is not None:
            weights = dict(plan.weights)
        else:
            weights = weights_from_balanced_accuracy(
                {m: o.val_bal_acc for m, o in unimodal.items()}
            )
        fused_by_id = late_weighted_sum(
            prob_tables, weights, plan.missing_policy, patients=test_ids
        )
        fused_probs = np.asarray([fused_by_id[p] for p in test_ids])
        fused_report = evaluate(y_test, fused_probs, threshold)
        fused = FusionOutcome(plan.strategy, fused_report, {"weights": weights})
    else:  # late-learned
        val_prob_tables = {
            m: {p: t[p] for p in split_ids["val"] if p in t}
            for m, t in prob_tables.items()
        }
        val_labels = {p: labels[p] for p in split_ids["val"]}
        head_result, _ = late_learned(
            val_prob_tables, val_labels, seed=plan.seed
        )
        X_test = _prob_features(prob_tables, test_ids)
        fused_probs = predict_probs(head_result.model, X_test)
        fused_report = evaluate(y_test, fused_probs, threshold)
        fused = FusionOutcome(
            plan.strategy, fused_report, {"head_best_epoch": head_result.best_epoch}
        )

    return ExperimentResult(
        patients=patients,
        split_ids=split_ids,
        unimodal=unimodal,
        fused=fused,
    )
