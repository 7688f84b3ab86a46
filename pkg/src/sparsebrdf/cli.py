"""Command-line interface wiring the pipeline stages together.

One verb per stage so each stage is individually runnable and cacheable:

    gen-corpus      write a synthetic corpus as MERL binaries + manifest
    train-dict      train a dictionary bundle from a corpus
    select-samples  compute optimal sample directions from a bundle
    reconstruct     recover a full BRDF from samples of a measured one
    evaluate        cross-validated experiment with baselines
    coherence       cumulative-coherence diagnostic of a bundle

stdout carries machine-readable summaries (JSON); logs go to stderr.
Exit codes: 0 success, 1 runtime failure, 2 usage, 3 bad configuration.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
from pathlib import Path

from . import evaluate as ev
from .dictionary import (
    DictionaryBundle,
    assemble_training_matrix,
    load_bundle,
    save_bundle,
    train_pca,
)
from .errors import ConfigError, SparseBrdfError
from .mapping import DEFAULT_EPSILON, compute_reference, log_relative_map
from .merl import BrdfResolution, corpus_mask, read_merl, write_merl
from .reconstruct import DEFAULT_ETA, measure, reconstruct_full
from .somp import (
    ErrorThreshold,
    SampleBudget,
    SupportSet,
    cumulative_coherence,
    direction_table,
    somp_select,
    support_to_directions,
)
from .synthetic import gen_corpus

SUPPORT_RECORD_VERSION = 1

# default parent directory for artifacts when --out is omitted
OUT_ENV = "SPARSEBRDF_OUT"


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _resolve_out(value, default_name: str) -> Path:
    if value:
        return Path(value)
    return Path(os.environ.get(OUT_ENV, "out")) / default_name


def _parse_res(text: str) -> BrdfResolution:
    parts = [int(p) for p in text.split(",")]
    if len(parts) == 1:
        parts = parts * 3
    if len(parts) != 3:
        raise ConfigError(f"resolution must be N or N,N,N, got {text!r}")
    return BrdfResolution(*parts)


def _load_corpus_dir(path: Path):
    files = sorted(path.glob("*.binary"))
    if not files:
        raise ConfigError(f"no .binary MERL files under {path}")
    return [(p.stem, read_merl(p)) for p in files]


def cmd_gen_corpus(args) -> int:
    res = _parse_res(args.res)
    out = _resolve_out(args.out, "corpus")
    out.mkdir(parents=True, exist_ok=True)
    corpus = gen_corpus(args.seed, args.count, res)
    manifest = {"seed": args.seed, "count": args.count,
                "resolution": [res.n_theta_h, res.n_theta_d, res.n_phi_d],
                "materials": []}
    for spec, tensor in corpus:
        write_merl(tensor, out / f"{spec.material_id}.binary")
        manifest["materials"].append({
            "id": spec.material_id, "model": spec.model,
            "albedo": list(spec.albedo), "specular": list(spec.specular),
            "shininess": spec.shininess, "roughness": spec.roughness,
            "f0": spec.f0,
        })
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    _log(f"wrote {len(corpus)} materials to {out}")
    print(json.dumps({"materials": len(corpus), "dir": str(out)}))
    return 0


def _corpus_from_args(args):
    if args.corpus:
        return _load_corpus_dir(Path(args.corpus))
    res = _parse_res(args.res)
    return [(s.material_id, b) for s, b in
            gen_corpus(args.synthetic_seed, args.synthetic_count, res)]


def cmd_train_dict(args) -> int:
    corpus = _corpus_from_args(args)
    ids = [mid for mid, _ in corpus]
    row_map = corpus_mask(b for _, b in corpus)
    reference = compute_reference(
        (b for _, b in corpus), row_map,
        epsilon=args.epsilon, statistic=args.statistic,
    )
    mapped = [log_relative_map(b, reference, row_map) for _, b in corpus]
    matrix = assemble_training_matrix(mapped, ids, row_map)
    _log(f"training matrix: {matrix.entries.shape[0]} x {matrix.n_signals}")
    pca = train_pca(matrix, args.k)
    snapshot = {"k": args.k, "epsilon": args.epsilon, "statistic": args.statistic,
                "materials": ids}
    bundle = DictionaryBundle(
        pca=pca, row_map=row_map, reference=reference,
        material_ids=tuple(ids),
        config_hash=_hash_snapshot(snapshot),
    )
    out = _resolve_out(args.out, "bundle")
    save_bundle(bundle, out)
    print(json.dumps({"bundle": str(out), "digest": bundle.digest,
                      "atoms": pca.n_atoms, "rows": pca.n_rows}))
    return 0


def _hash_snapshot(snapshot: dict) -> str:
    return hashlib.sha256(json.dumps(snapshot, sort_keys=True).encode()).hexdigest()[:16]


def cmd_select_samples(args) -> int:
    bundle = load_bundle(args.dict)
    if args.threshold is not None:
        stop = ErrorThreshold(args.threshold, args.max_iters)
    else:
        stop = SampleBudget(args.m)
        if args.m <= bundle.pca.n_atoms:
            bundle = bundle.truncate(args.m)
    support = somp_select(
        bundle.pca.inverse, bundle.pca.coeffs, stop,
        normalize_atoms=args.normalize_atoms,
    )
    directions = support_to_directions(support, bundle.row_map)
    record = {
        "version": SUPPORT_RECORD_VERSION,
        "m": len(support),
        "rows": list(support.indices),
        "grid": [int(bundle.row_map.grid_indices[r]) for r in support.indices],
        "directions_deg": [[round(v, 3) for v in d.degrees()] for d in directions],
        "residual_history": [float(r) for r in support.residual_history],
        "bundle_digest": bundle.digest,
        "normalize_atoms": args.normalize_atoms,
    }
    if args.out:
        Path(args.out).write_text(json.dumps(record, indent=2))
        _log(f"support written to {args.out}")
    _log(direction_table(directions))
    print(json.dumps(record))
    return 0


def cmd_reconstruct(args) -> int:
    bundle = load_bundle(args.dict)
    record = json.loads(Path(args.support).read_text())
    if record["m"] <= bundle.pca.n_atoms:
        bundle = bundle.truncate(record["m"])
    if record["bundle_digest"] != bundle.digest:
        raise ConfigError(
            f"support record was computed against bundle {record['bundle_digest']}, "
            f"got {bundle.digest}"
        )
    brdf = read_merl(args.brdf)
    mapped = log_relative_map(brdf, bundle.reference, bundle.row_map)
    support = SupportSet(indices=[int(r) for r in record["rows"]])
    samples = measure(mapped, support, material_id=Path(args.brdf).stem)
    result = reconstruct_full(samples, bundle, eta=args.eta)
    out = _resolve_out(args.out, f"{Path(args.brdf).stem}-recon.binary")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_merl(result.tensor, out)
    sidecar = {
        "source": str(args.brdf), "bundle_digest": bundle.digest,
        "support": str(args.support), "eta": args.eta,
        "ridge_residuals": [float(r) for r in result.ridge_residuals],
    }
    Path(str(out) + ".json").write_text(json.dumps(sidecar, indent=2))
    print(json.dumps({"out": str(out),
                      "ridge_residuals": sidecar["ridge_residuals"]}))
    return 0


def _config_from_ini(path: Path) -> dict:
    parser = configparser.ConfigParser()
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    parser.read(path)
    raw: dict = {}
    get = parser.get

    def has(section, key):
        return parser.has_option(section, key)

    if parser.has_section("corpus"):
        source = get("corpus", "source", fallback="synthetic")
        if source == "directory":
            raw["corpus_dir"] = get("corpus", "path")
            raw["synthetic"] = None
        elif source == "synthetic":
            raw["synthetic"] = ev.SyntheticCorpusSpec(
                seed=parser.getint("corpus", "seed", fallback=42),
                count=parser.getint("corpus", "count", fallback=50),
                resolution=_parse_res(get("corpus", "res", fallback="16")),
            )
        else:
            raise ConfigError(f"unknown corpus source {source!r}")
    if has("mapping", "epsilon"):
        raw["epsilon"] = parser.getfloat("mapping", "epsilon")
    if has("mapping", "statistic"):
        raw["reference_statistic"] = get("mapping", "statistic")
    if has("dictionary", "k_policy"):
        raw["k_policy"] = get("dictionary", "k_policy")
    if has("dictionary", "k_fixed"):
        raw["k_fixed"] = parser.getint("dictionary", "k_fixed")
    if has("selection", "m"):
        raw["m_values"] = tuple(int(v) for v in get("selection", "m").split(","))
    if has("selection", "eta"):
        raw["eta"] = parser.getfloat("selection", "eta")
    if has("selection", "normalize_atoms"):
        raw["normalize_atoms"] = parser.getboolean("selection", "normalize_atoms")
    if get("selection", "stop", fallback="budget") == "threshold":
        raw["stop_threshold"] = parser.getfloat("selection", "threshold")
        if has("selection", "max_iters"):
            raw["stop_max_iters"] = parser.getint("selection", "max_iters")
    if has("experiment", "folds"):
        raw["folds"] = parser.getint("experiment", "folds")
    if has("experiment", "seed"):
        raw["seed"] = parser.getint("experiment", "seed")
    if has("experiment", "random_trials"):
        raw["random_trials"] = parser.getint("experiment", "random_trials")
    if has("output", "threads"):
        raw["threads"] = parser.getint("output", "threads")
    if has("output", "dir"):
        raw["_out_dir"] = get("output", "dir")
    return raw


def cmd_evaluate(args) -> int:
    raw = _config_from_ini(Path(args.config)) if args.config else {}
    out_dir = Path(args.out or raw.pop("_out_dir", None)
                   or os.environ.get(OUT_ENV, "out"))
    raw.pop("_out_dir", None)
    # flags override file values
    if args.threads is not None:
        raw["threads"] = args.threads
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.folds is not None:
        raw["folds"] = args.folds
    if args.m is not None:
        raw["m_values"] = tuple(int(v) for v in args.m.split(","))
    if args.random_trials is not None:
        raw["random_trials"] = args.random_trials
    try:
        config = ev.ExperimentConfig(**raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    _log(f"running experiment {config.config_hash()}")
    report = ev.run_experiment(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    report.to_jsonl(out_dir / "report.jsonl")
    report.series_csv(out_dir / "series.csv")
    summary = report.summary()
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps({"hash": report.config_hash, "rows": len(report.rows),
                      "summary": summary}))
    return 0


def cmd_coherence(args) -> int:
    bundle = load_bundle(args.dict)
    dinv = bundle.pca.inverse
    n = dinv.shape[1]
    if n > args.max_atoms:
        raise ConfigError(
            f"coherence scan over {n} columns exceeds --max-atoms={args.max_atoms}; "
            "raise the cap if you really want the O(n^2) scan"
        )
    values = {m: cumulative_coherence(dinv, m) for m in
              sorted({int(v) for v in args.m.split(",")})}
    print(json.dumps({"bundle_digest": bundle.digest,
                      "mu1": {str(m): v for m, v in values.items()}}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsebrdf",
        description="Optimal sparse sampling and reconstruction of measured BRDFs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    out_help = f"output path (default: ${OUT_ENV} or ./out)"

    p = sub.add_parser("gen-corpus", help="write a synthetic corpus of MERL files")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--res", default="16")
    p.add_argument("--out", help=out_help)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("train-dict", help="train a dictionary bundle")
    p.add_argument("--corpus", help="directory of MERL .binary files")
    p.add_argument("--synthetic-seed", type=int, default=42)
    p.add_argument("--synthetic-count", type=int, default=50)
    p.add_argument("--res", default="16")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--statistic", choices=("median", "mean"), default="median")
    p.add_argument("--out", help=out_help)
    p.set_defaults(func=cmd_train_dict)

    p = sub.add_parser("select-samples", help="compute optimal sample directions")
    p.add_argument("--dict", required=True)
    p.add_argument("--m", type=int, default=20)
    p.add_argument("--threshold", type=float, default=None,
                   help="stop at this residual instead of a fixed budget")
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--normalize-atoms", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_select_samples)

    p = sub.add_parser("reconstruct", help="reconstruct a full BRDF from samples")
    p.add_argument("--dict", required=True)
    p.add_argument("--support", required=True)
    p.add_argument("--brdf", required=True, help="measured BRDF to sample")
    p.add_argument("--eta", type=float, default=DEFAULT_ETA)
    p.add_argument("--out", help=out_help)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="cross-validated experiment")
    p.add_argument("--config", help="INI config file")
    p.add_argument("--out")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--m", default=None, help="comma-separated sample counts")
    p.add_argument("--random-trials", type=int, default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("coherence", help="cumulative coherence diagnostic")
    p.add_argument("--dict", required=True)
    p.add_argument("--m", default="1,2,3")
    p.add_argument("--max-atoms", type=int, default=4096)
    p.set_defaults(func=cmd_coherence)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _log(f"config error: {exc}")
        return 3
    except (SparseBrdfError, OSError) as exc:
        _log(f"error: {type(exc).__name__}: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
