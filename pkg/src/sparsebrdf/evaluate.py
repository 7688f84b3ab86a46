"""Cross-validated evaluation of sample selection and reconstruction.

The harness reproduces the evaluation protocol at desk scale: k-fold
cross-validation over a corpus, per-fold dictionary training on the train
split only, greedy sample selection, reconstruction of every held-out
material, and a uniform-random sample placement baseline run alongside.
Errors are mean squared differences in the mapped domain; the reciprocal
(higher is better) is what plots usually show.

All randomness flows from the single experiment seed through named
sub-streams, so identical configs reproduce identical reports regardless of
worker count.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dictionary import DictionaryBundle, assemble_training_matrix, train_pca
from .errors import (
    ConfigError,
    InvalidKError,
    InvalidMError,
    ProvenanceMismatchError,
    ShapeMismatchError,
    TooLargeError,
)
from .mapping import DEFAULT_EPSILON, MappedBrdf, compute_reference, log_relative_map
from .merl import BrdfResolution, corpus_mask, read_merl
from .reconstruct import DEFAULT_ETA, measure, reconstruct_full
from .somp import (
    ErrorThreshold,
    SampleBudget,
    SupportSet,
    somp_select,
    support_to_directions,
)
from .synthetic import gen_corpus

# sub-stream tags hung off the experiment seed
_STREAM_FOLDS = 0
_STREAM_BASELINE = 1


def _stream_seed(seed: int, *tags: int) -> int:
    return int(np.random.SeedSequence([seed, *tags]).generate_state(1)[0])


@dataclass(frozen=True)
class FoldPlan:
    """Disjoint test folds covering the corpus, deterministic under seed."""

    k: int
    seed: int
    folds: tuple

    def train_ids(self, fold: int, all_ids) -> list:
        test = set(self.folds[fold])
        return [i for i in all_ids if i not in test]


def kfold_split(ids, k: int, seed: int) -> FoldPlan:
    ids = list(ids)
    if not 2 <= k <= len(ids):
        raise InvalidKError(f"fold count {k} outside [2, {len(ids)}]")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ids))
    folds = tuple(
        tuple(ids[i] for i in chunk) for chunk in np.array_split(perm, k)
    )
    return FoldPlan(k=k, seed=seed, folds=folds)


def mse_mapped(a: MappedBrdf, b: MappedBrdf) -> float:
    """Mean squared difference over all valid cells and channels."""
    if a.provenance != b.provenance:
        raise ProvenanceMismatchError("operands mapped against different references")
    if a.values.shape != b.values.shape:
        raise ShapeMismatchError(f"{a.values.shape} vs {b.values.shape}")
    diff = a.values - b.values
    return float(np.mean(diff * diff))


def inverse_mse(mse: float) -> float:
    return math.inf if mse == 0.0 else 1.0 / mse


def snr_db(reference: MappedBrdf, recon: MappedBrdf) -> float:
    """10 log10 of signal energy over residual energy, in the mapped domain."""
    if reference.provenance != recon.provenance:
        raise ProvenanceMismatchError("operands mapped against different references")
    signal = float(np.sum(reference.values**2))
    noise = float(np.sum((reference.values - recon.values) ** 2))
    if noise == 0.0:
        return math.inf
    return 10.0 * math.log10(signal / noise)


def random_baseline(valid_count: int, m: int, seed) -> SupportSet:
    """m distinct uniform row indices; deterministic under seed."""
    if not 1 <= m <= valid_count:
        raise InvalidMError(f"m={m} outside [1, {valid_count}]")
    rng = np.random.default_rng(seed)
    idx = rng.choice(valid_count, size=m, replace=False)
    return SupportSet(indices=[int(i) for i in idx])


_ENUM_LIMIT = 1_000_000


def brute_force_support(dinv: np.ndarray, coeffs: np.ndarray, m: int):
    """Exhaustive search for the globally optimal support of size m.

    Only feasible at tiny scale; serves as the ground-truth lower bound for
    the greedy solver.  Ties resolve to the lexicographically smallest
    subset.
    """
    dinv = np.asarray(dinv, dtype=np.float64)
    n = dinv.shape[1]
    if math.comb(n, m) > _ENUM_LIMIT:
        raise TooLargeError(
            f"C({n}, {m}) exceeds the enumeration bound of {_ENUM_LIMIT}"
        )
    best_combo = None
    best_res = math.inf
    for combo in itertools.combinations(range(n), m):
        basis = dinv[:, combo]
        sol, *_ = np.linalg.lstsq(basis, coeffs, rcond=None)
        res = float(np.linalg.norm(coeffs - basis @ sol))
        if res < best_res:
            best_res = res
            best_combo = combo
    return list(best_combo), best_res


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    seed: int = 42
    count: int = 50
    resolution: BrdfResolution = BrdfResolution(16, 16, 16)


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one evaluation run; hashable into artifacts.

    Selection runs in budget mode (one support per entry of m_values) unless
    stop_threshold is set, in which case a single support is grown per fold
    until the training residual drops below the threshold.  Threshold mode
    needs a fixed atom count since there is no m to couple k to.
    """

    corpus_dir: str | None = None
    synthetic: SyntheticCorpusSpec | None = field(default_factory=SyntheticCorpusSpec)
    epsilon: float = DEFAULT_EPSILON
    reference_statistic: str = "median"
    m_values: tuple = (5, 10, 20)
    k_policy: str = "coupled"  # "coupled": k = m; "fixed": k = k_fixed
    k_fixed: int | None = None
    eta: float = DEFAULT_ETA
    stop_threshold: float | None = None
    stop_max_iters: int | None = None
    folds: int = 5
    seed: int = 7
    random_trials: int = 20
    normalize_atoms: bool = False
    threads: int = 0  # 0 = all available cores

    def __post_init__(self):
        if (self.corpus_dir is None) == (self.synthetic is None):
            raise ConfigError("exactly one corpus source must be set")
        if self.k_policy not in ("coupled", "fixed"):
            raise ConfigError(f"unknown k policy {self.k_policy!r}")
        if self.k_policy == "fixed" and not self.k_fixed:
            raise ConfigError("fixed k policy requires k_fixed")
        if self.stop_threshold is not None and self.k_policy != "fixed":
            raise ConfigError("threshold stopping requires the fixed k policy")
        if not self.m_values and self.stop_threshold is None:
            raise ConfigError("at least one sample count required")
        if self.k_policy == "fixed" and self.stop_threshold is None:
            if any(m > self.k_fixed for m in self.m_values):
                raise ConfigError(
                    "the greedy selector cannot pick more samples than atoms; "
                    f"m_values must stay <= k_fixed={self.k_fixed}"
                )
        if self.random_trials < 0 or self.folds < 2:
            raise ConfigError("need folds >= 2 and random_trials >= 0")

    def k_for(self, m: int) -> int:
        return m if self.k_policy == "coupled" else int(self.k_fixed)

    def snapshot(self) -> dict:
        snap = {
            "corpus_dir": self.corpus_dir,
            "synthetic": None,
            "epsilon": self.epsilon,
            "reference_statistic": self.reference_statistic,
            "m_values": list(self.m_values),
            "k_policy": self.k_policy,
            "k_fixed": self.k_fixed,
            "eta": self.eta,
            "stop_threshold": self.stop_threshold,
            "stop_max_iters": self.stop_max_iters,
            "folds": self.folds,
            "seed": self.seed,
            "random_trials": self.random_trials,
            "normalize_atoms": self.normalize_atoms,
        }
        if self.synthetic is not None:
            res = self.synthetic.resolution
            snap["synthetic"] = {
                "seed": self.synthetic.seed,
                "count": self.synthetic.count,
                "resolution": [res.n_theta_h, res.n_theta_d, res.n_phi_d],
            }
        return snap

    def config_hash(self) -> str:
        blob = json.dumps(self.snapshot(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ExperimentReport:
    """Per fold x material x m x method records plus the supports used."""

    config: dict
    config_hash: str
    rows: list
    supports: list

    def to_jsonl(self, path) -> None:
        path = Path(path)
        with open(path, "w") as fh:
            fh.write(json.dumps({"record": "config", "hash": self.config_hash,
                                 "config": self.config}, sort_keys=True) + "\n")
            for sup in self.supports:
                fh.write(json.dumps({"record": "support", **sup}, sort_keys=True) + "\n")
            for row in self.rows:
                fh.write(json.dumps({"record": "result", **row}, sort_keys=True) + "\n")

    def summary(self) -> list:
        """Mean MSE / inverse MSE per (m, method) over folds and materials."""
        groups = {}
        for row in self.rows:
            if row.get("status") != "ok":
                continue
            groups.setdefault((row["m"], row["method"]), []).append(row["mse"])
        out = []
        for (m, method), mses in sorted(groups.items()):
            mean = float(np.mean(mses))
            out.append({
                "m": m,
                "method": method,
                "mean_mse": mean,
                "inverse_mean_mse": inverse_mse(mean),
                "count": len(mses),
            })
        return out

    def series_csv(self, path) -> None:
        """Inverse-MSE-versus-m series for external plotting."""
        lines = ["m,method,mean_mse,inverse_mean_mse"]
        for rec in self.summary():
            inv = rec["inverse_mean_mse"]
            inv_s = "inf" if math.isinf(inv) else f"{inv:.10g}"
            lines.append(f"{rec['m']},{rec['method']},{rec['mean_mse']:.10g},{inv_s}")
        Path(path).write_text("\n".join(lines) + "\n")


def load_corpus(config: ExperimentConfig):
    """Materialize the corpus as a list of (material_id, BrdfTensor)."""
    if config.synthetic is not None:
        spec = config.synthetic
        return [
            (s.material_id, b)
            for s, b in gen_corpus(spec.seed, spec.count, spec.resolution)
        ]
    paths = sorted(Path(config.corpus_dir).glob("*.binary"))
    if not paths:
        raise ConfigError(f"no .binary MERL files under {config.corpus_dir}")
    return [(p.stem, read_merl(p)) for p in paths]


def _evaluate_one(mapped_true, support, bundle, eta):
    samples = measure(mapped_true, support)
    recon = reconstruct_full(samples, bundle, eta=eta)
    mse = mse_mapped(mapped_true, recon.mapped)
    return mse, snr_db(mapped_true, recon.mapped)


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Run the full cross-validated selection/reconstruction experiment.

    Per fold: the mapping reference and dictionary are trained on the train
    split only; the greedy selector and the random baseline each produce
    supports per sample count; every held-out material is reconstructed from
    each support.  Tasks are pure, so worker threads only change wall time,
    never the records.
    """
    corpus = load_corpus(config)
    ids = [mid for mid, _ in corpus]
    tensors = {mid: b for mid, b in corpus}
    row_map = corpus_mask(tensors.values())
    plan = kfold_split(ids, config.folds, _stream_seed(config.seed, _STREAM_FOLDS))
    config_hash = config.config_hash()

    threshold_mode = config.stop_threshold is not None
    k_list = ([config.k_fixed] if threshold_mode
              else [config.k_for(m) for m in config.m_values])
    supports = []
    tasks = []  # (sort_key, row_stub, (mapped, support, bundle))

    for fold in range(plan.k):
        test_ids = list(plan.folds[fold])
        train_ids = plan.train_ids(fold, ids)
        reference = compute_reference(
            (tensors[i] for i in train_ids),
            row_map,
            epsilon=config.epsilon,
            statistic=config.reference_statistic,
        )
        mapped = {i: log_relative_map(tensors[i], reference, row_map) for i in ids}
        matrix = assemble_training_matrix(
            [mapped[i] for i in train_ids], train_ids, row_map
        )
        k_max = max(k_list)
        if k_max >= matrix.n_signals:
            raise ConfigError(
                f"k={k_max} needs more training signals than {matrix.n_signals}"
            )
        bundle_full = DictionaryBundle(
            pca=train_pca(matrix, k_max),
            row_map=row_map,
            reference=reference,
            material_ids=tuple(train_ids),
            config_hash=config_hash,
        )

        selections = []
        if threshold_mode:
            t0 = time.perf_counter()
            support = somp_select(
                bundle_full.pca.inverse,
                bundle_full.pca.coeffs,
                ErrorThreshold(config.stop_threshold, config.stop_max_iters),
                normalize_atoms=config.normalize_atoms,
            )
            selections.append(
                (len(support), bundle_full, support, time.perf_counter() - t0)
            )
        else:
            for m in config.m_values:
                bundle = bundle_full.truncate(config.k_for(m))
                t0 = time.perf_counter()
                support = somp_select(
                    bundle.pca.inverse,
                    bundle.pca.coeffs,
                    SampleBudget(m),
                    normalize_atoms=config.normalize_atoms,
                )
                selections.append((m, bundle, support, time.perf_counter() - t0))

        for m, bundle, support, select_seconds in selections:
            directions = support_to_directions(support, row_map)
            supports.append({
                "fold": fold,
                "m": m,
                "method": "somp",
                "rows": list(support.indices),
                "grid": [int(row_map.grid_indices[r]) for r in support.indices],
                "directions_deg": [
                    [round(v, 3) for v in d.degrees()] for d in directions
                ],
                "initial_residual": float(np.linalg.norm(bundle.pca.coeffs)),
                "residual_history": [float(r) for r in support.residual_history],
                "seconds": select_seconds,
            })

            for mid in test_ids:
                tasks.append((
                    (fold, m, "somp", mid, -1),
                    {"fold": fold, "m": m, "method": "somp", "material": mid,
                     "trial": None},
                    (mapped[mid], support, bundle),
                ))
            for trial in range(config.random_trials):
                rsupport = random_baseline(
                    row_map.n_valid, m,
                    _stream_seed(config.seed, _STREAM_BASELINE, fold, m, trial),
                )
                for mid in test_ids:
                    tasks.append((
                        (fold, m, "random", mid, trial),
                        {"fold": fold, "m": m, "method": "random",
                         "material": mid, "trial": trial},
                        (mapped[mid], rsupport, bundle),
                    ))

    def run_task(task):
        _, stub, (mapped_true, support, bundle) = task
        row = dict(stub)
        try:
            mse, snr = _evaluate_one(mapped_true, support, bundle, config.eta)
            inv = inverse_mse(mse)
            row.update({
                "status": "ok",
                "mse": mse,
                "inverse_mse": "inf" if math.isinf(inv) else inv,
                "snr_db": "inf" if math.isinf(snr) else snr,
            })
        except Exception as exc:  # partial results keep a failure marker
            row.update({"status": "error", "error": f"{type(exc).__name__}: {exc}"})
        return row

    tasks.sort(key=lambda t: t[0])
    workers = config.threads if config.threads > 0 else (os.cpu_count() or 1)
    if workers > 1:
        # map() preserves task order, and every task is pure, so worker
        # count cannot change the records
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_task, tasks))
    else:
        rows = [run_task(t) for t in tasks]

    return ExperimentReport(
        config=config.snapshot(),
        config_hash=config_hash,
        rows=rows,
        supports=supports,
    )
