"""Command-line entry point: gen / detect / train / classify / spectra.

Every command resolves its configuration from defaults, an optional JSON
config file, and explicit flags (flags win), echoes the resolved config to
the output directory, and writes deterministic, timestamp-free outputs so
identical runs produce byte-identical files.

Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import classifier, flowgen, parqvd, render, seqqvd, trainer
from .qstate import RegisterLayout


class ValidationError(ValueError):
    pass


def _write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults < config file < explicit flags."""
    config = dict(defaults)
    if getattr(args, "config", None):
        loaded = json.loads(Path(args.config).read_text())
        unknown = set(loaded) - set(defaults)
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        config.update(loaded)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    return config


def _out_dir(config: dict) -> Path:
    out = Path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_config(config: dict, out: Path) -> None:
    # the output path itself stays out of the echo so identical configs
    # written to different directories produce identical bytes
    _write_json({k: v for k, v in config.items() if k != "out"}, out / "config.json")


def _layout(config: dict) -> RegisterLayout:
    return RegisterLayout(n_f=config["n_f"], n_w=config["n_w"],
                          n_c=config["n_c"], n_lfps=config["n_lfps"])


_LAYOUT_DEFAULTS = {"n_f": 16, "n_w": 10, "n_c": 5, "n_lfps": 3}


def _add_layout_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-f", dest="n_f", type=int)
    p.add_argument("--n-w", dest="n_w", type=int)
    p.add_argument("--n-c", dest="n_c", type=int)
    p.add_argument("--n-lfps", dest="n_lfps", type=int)


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------

GEN_DEFAULTS = {
    "out": None, "n": 10, "width": 200, "height": 200,
    "m_min": 4, "m_max": 8, "min_separation": 40.0,
    "delta_min": 0.5, "delta_max": 2.0,
    "vmax_min": 0.5, "vmax_max": 1.5,
    "radius_min": 6.0, "radius_max": 14.0,
    "noise_amplitude": 0.1, "noise_sigma": 5.0, "noise_seed": 0,
    "seed": 0,
}


def cmd_gen(args: argparse.Namespace) -> int:
    config = _resolve(args, GEN_DEFAULTS)
    if config["out"] is None:
        raise ValidationError("--out is required")
    try:
        spec = flowgen.DatasetSpec(
            n_fields=config["n"],
            grid=(config["width"], config["height"]),
            vortex_count_range=(config["m_min"], config["m_max"]),
            param_ranges=flowgen.ParamRanges(
                delta=(config["delta_min"], config["delta_max"]),
                v_max=(config["vmax_min"], config["vmax_max"]),
                core_radius=(config["radius_min"], config["radius_max"]),
            ),
            min_separation=config["min_separation"],
            noise=flowgen.NoiseConfig(amplitude=config["noise_amplitude"],
                                      kernel_sigma=config["noise_sigma"],
                                      seed=config["noise_seed"]),
            seed=config["seed"],
        )
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    out = _out_dir(config)
    fields = flowgen.generate_dataset(spec)
    flowgen.save_dataset(fields, out, spec)
    _echo_config(config, out)
    print(f"wrote {len(fields)} fields to {out}")
    return 0


# ---------------------------------------------------------------------------
# detect
# ---------------------------------------------------------------------------

DETECT_DEFAULTS = {
    "out": None, "data": None,
    "alpha": 8, "beta": 3.0, "gamma": 0.9, "merge_radius": 0.0,  # 0 -> 2*r_c
    "render": False, **_LAYOUT_DEFAULTS,
}


def cmd_detect(args: argparse.Namespace) -> int:
    config = _resolve(args, DETECT_DEFAULTS)
    if config["out"] is None or config["data"] is None:
        raise ValidationError("--out and --data are required")
    data_dir = Path(config["data"])
    if not (data_dir / "manifest.json").exists():
        raise ValidationError(f"no dataset manifest under {data_dir}")
    try:
        params = seqqvd.DetectionParams(alpha=config["alpha"], beta=config["beta"],
                                        gamma=config["gamma"])
        layout = _layout(config)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc

    out = _out_dir(config)
    fields = flowgen.load_dataset(data_dir)
    merge_radius = config["merge_radius"] or None
    counts = []
    for i, field in enumerate(fields):
        report = seqqvd.detect_field(field, params, layout, merge_radius=merge_radius)
        seqqvd.write_report_json(report, i, params, out / f"report_{i:03d}.json")
        seqqvd.write_peaks_csv(seqqvd.window_peaks(field, params, layout),
                               out / f"peaks_{i:03d}.csv")
        if config["render"]:
            template = seqqvd.ContourTemplate.from_beta(layout.window_side,
                                                        params.beta, layout.n_c)
            render.render_detections(field.vorticity,
                                     [d.center for d in report.raw],
                                     report.unique_centers,
                                     template.radius, out / f"render_{i:03d}.ppm")
        counts.append(report.count)
    _echo_config(config, out)
    print(f"detected counts: {counts}")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

TRAIN_DEFAULTS = {
    "out": None, "data": None,
    "epochs": 20, "seeds": 5, "split": 0.75, "seed": 0,
    "method": "bayes", "objective": "mse",
    "alpha_min": 4, "alpha_max": 32, "beta_min": 1, "beta_max": 8,
    "gamma_min": 0.1, "gamma_max": 3.0, "gamma_steps": 16,
    **_LAYOUT_DEFAULTS,
}


def cmd_train(args: argparse.Namespace) -> int:
    config = _resolve(args, TRAIN_DEFAULTS)
    if config["out"] is None or config["data"] is None:
        raise ValidationError("--out and --data are required")
    if config["epochs"] < 1:
        raise ValidationError("epochs must be >= 1")
    if not (0 < config["split"] < 1):
        raise ValidationError("split must lie in (0, 1)")
    if config["method"] not in ("bayes", "grid"):
        raise ValidationError("method must be 'bayes' or 'grid'")
    try:
        space = trainer.SearchSpace(
            alpha_range=(config["alpha_min"], config["alpha_max"]),
            beta_range=(config["beta_min"], config["beta_max"]),
            gamma_range=(config["gamma_min"], config["gamma_max"]),
        )
        layout = _layout(config)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc

    out = _out_dir(config)
    fields = flowgen.load_dataset(Path(config["data"]))

    if config["method"] == "grid":
        best, table = trainer.grid_search(fields, space, layout, config["gamma_steps"])
        _write_json({"best": {"alpha": best.alpha, "beta": best.beta, "gamma": best.gamma},
                     "table": [list(row) for row in table]},
                    out / "grid_search.json")
        _echo_config(config, out)
        print(f"grid best: alpha={best.alpha} beta={best.beta} gamma={best.gamma:.4f}")
        return 0

    histories = []
    for s in range(config["seeds"]):
        train_set, test_set = trainer.split_dataset(fields, config["split"],
                                                    seed=[config["seed"], s])
        history = trainer.bayes_opt(train_set, test_set, space, config["epochs"],
                                    seed=[config["seed"], s], layout=layout,
                                    objective=config["objective"],
                                    gamma_steps=config["gamma_steps"])
        history.write_csv(out / f"history_seed{s}.csv")
        histories.append(history)
    summary = trainer.summarize_histories(histories)
    trainer.write_summary_json(summary, out / "summary.json")
    _echo_config(config, out)
    print(f"median final train MSE: {summary['train_mse']['median']:.4f}, "
          f"test MSE: {summary['test_mse']['median']:.4f}")
    return 0


# ---------------------------------------------------------------------------
# classify
# ---------------------------------------------------------------------------

CLASSIFY_DEFAULTS = {
    "out": None, "data_nv": None, "data_v": None,
    "shots": "1,5,10,100,1000", "budget": 10000, "shots_per_field": 1000,
    "alpha": 8, "beta": 3.0, "gamma": 0.9,
    "n_a": 8, "selected_k": 0, "truncate_qubits": 8,
    "n_trees": 100, "max_depth": 8, "min_split": 2,
    "k_folds": 5, "seed": 0, **_LAYOUT_DEFAULTS,
}


def cmd_classify(args: argparse.Namespace) -> int:
    config = _resolve(args, CLASSIFY_DEFAULTS)
    for key in ("out", "data_nv", "data_v"):
        if config[key] is None:
            raise ValidationError(f"--{key.replace('_', '-')} is required")
    shot_list = [int(s) for s in str(config["shots"]).split(",") if s]
    if not shot_list or any(s <= 0 for s in shot_list):
        raise ValidationError("shots must be positive integers")
    for s in shot_list:
        if config["budget"] % s:
            raise ValidationError(f"budget {config['budget']} not divisible by {s} shots")

    layout = _layout(config)
    nv_fields = flowgen.load_dataset(Path(config["data_nv"]))
    v_fields = flowgen.load_dataset(Path(config["data_v"]))
    if not nv_fields or not v_fields:
        raise ValidationError("both classes need at least one field")
    params = seqqvd.DetectionParams(alpha=config["alpha"], beta=config["beta"],
                                    gamma=config["gamma"])
    width, height = nv_fields[0].width, nv_fields[0].height
    cfg = parqvd.default_parallel_config(width, height, layout, n_a=config["n_a"],
                                         selected_k=config["selected_k"],
                                         truncate_qubits=config["truncate_qubits"])
    out = _out_dir(config)
    nv_rep = parqvd.representative_distribution(
        nv_fields, params, cfg, layout, config["shots_per_field"],
        seed=[config["seed"], 0], label=parqvd.NON_VORTICAL)
    v_rep = parqvd.representative_distribution(
        v_fields, params, cfg, layout, config["shots_per_field"],
        seed=[config["seed"], 1], label=parqvd.VORTICAL)
    forest_cfg = classifier.ForestConfig(n_trees=config["n_trees"],
                                         max_depth=config["max_depth"],
                                         min_split=config["min_split"])
    rows = classifier.shots_sweep(nv_rep, v_rep, shot_list, config["budget"],
                                  forest_cfg, seed=config["seed"],
                                  k_folds=config["k_folds"])
    classifier.write_metrics_csv(rows, out / "metrics.csv")
    parqvd.write_distribution_json(nv_rep, out / "rep_non_vortical.json")
    parqvd.write_distribution_json(v_rep, out / "rep_vortical.json")
    _echo_config(config, out)
    for shots, m in rows:
        print(f"shots={shots}: F1={m.f1:.3f}+/-{m.f1_std:.3f} AUC={m.auc:.3f}+/-{m.auc_std:.3f}")
    return 0


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------

SPECTRA_DEFAULTS = {
    "out": None, "data": None, "field_id": None,
    "alpha": 8, "beta": 3.0,
    "n_a": 8, "selected_k": 0, "truncate_qubits": 8,
    "dump_state": False,
    **_LAYOUT_DEFAULTS,
}


def cmd_spectra(args: argparse.Namespace) -> int:
    config = _resolve(args, SPECTRA_DEFAULTS)
    if config["out"] is None or config["data"] is None:
        raise ValidationError("--out and --data are required")
    if config["field_id"] is None:
        raise ValidationError("--field-id is required")
    layout = _layout(config)
    fields = flowgen.load_dataset(Path(config["data"]))
    fid = config["field_id"]
    if not (0 <= fid < len(fields)):
        raise ValidationError(f"field id {fid} outside dataset of {len(fields)} fields")
    field = fields[fid]
    params = seqqvd.DetectionParams(alpha=config["alpha"], beta=config["beta"], gamma=1.0)
    template = seqqvd.ContourTemplate.from_beta(layout.window_side, params.beta, layout.n_c)
    positions = seqqvd.window_positions(field.width, field.height, params.alpha,
                                        layout.window_side)
    out = _out_dir(config)

    power_path = out / f"power_{fid:03d}.csv"
    with open(power_path, "w", newline="") as fh:
        import csv as _csv
        writer = _csv.writer(fh)
        writer.writerow(["x0", "y0", "k", "value"])
        for x0, y0 in positions:
            values = seqqvd.contour_values(field.vorticity, (x0, y0), template)
            ps = seqqvd.power_spectrum(values, layout.n_lfps)
            for k, v in enumerate(ps.values.tolist()):
                writer.writerow([x0, y0, k, v])

    if np.any(field.vorticity):
        cfg = parqvd.default_parallel_config(field.width, field.height, layout,
                                             n_a=config["n_a"],
                                             selected_k=config["selected_k"],
                                             truncate_qubits=config["truncate_qubits"])
        density = parqvd.density_spectrum(field, params, cfg, layout)
        parqvd.write_distribution_csv(density.probs, out / f"density_{fid:03d}.csv",
                                      header=("bin", "prob"))
        if config["dump_state"]:
            from .qstate import dump_statevector, encode_flow
            dump_statevector(encode_flow(field.vorticity, layout),
                             out / f"state_{fid:03d}.qsv")
    else:
        parqvd.write_distribution_csv(np.zeros(1 << config["truncate_qubits"]),
                                      out / f"density_{fid:03d}.csv",
                                      header=("bin", "prob"))
    _echo_config(config, out)
    print(f"wrote spectra for field {fid} to {out}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qvd",
                                     description="Quantum vortex detection pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a seeded flow-field dataset")
    p.add_argument("--out")
    p.add_argument("--config")
    p.add_argument("--n", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--m-min", dest="m_min", type=int)
    p.add_argument("--m-max", dest="m_max", type=int)
    p.add_argument("--min-separation", dest="min_separation", type=float)
    p.add_argument("--delta-min", dest="delta_min", type=float)
    p.add_argument("--delta-max", dest="delta_max", type=float)
    p.add_argument("--vmax-min", dest="vmax_min", type=float)
    p.add_argument("--vmax-max", dest="vmax_max", type=float)
    p.add_argument("--radius-min", dest="radius_min", type=float)
    p.add_argument("--radius-max", dest="radius_max", type=float)
    p.add_argument("--noise-amplitude", dest="noise_amplitude", type=float)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    p.add_argument("--noise-seed", dest="noise_seed", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("detect", help="run sequential detection over a dataset")
    p.add_argument("--out")
    p.add_argument("--config")
    p.add_argument("--data")
    p.add_argument("--alpha", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--merge-radius", dest="merge_radius", type=float)
    p.add_argument("--render", action="store_const", const=True)
    _add_layout_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("train", help="optimize detection parameters")
    p.add_argument("--out")
    p.add_argument("--config")
    p.add_argument("--data")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seeds", type=int)
    p.add_argument("--split", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--method", choices=("bayes", "grid"))
    p.add_argument("--objective", choices=("mse", "accuracy"))
    p.add_argument("--alpha-min", dest="alpha_min", type=int)
    p.add_argument("--alpha-max", dest="alpha_max", type=int)
    p.add_argument("--beta-min", dest="beta_min", type=int)
    p.add_argument("--beta-max", dest="beta_max", type=int)
    p.add_argument("--gamma-min", dest="gamma_min", type=float)
    p.add_argument("--gamma-max", dest="gamma_max", type=float)
    p.add_argument("--gamma-steps", dest="gamma_steps", type=int)
    _add_layout_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="shots sweep classification of density spectra")
    p.add_argument("--out")
    p.add_argument("--config")
    p.add_argument("--data-nv", dest="data_nv")
    p.add_argument("--data-v", dest="data_v")
    p.add_argument("--shots")
    p.add_argument("--budget", type=int)
    p.add_argument("--shots-per-field", dest="shots_per_field", type=int)
    p.add_argument("--alpha", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--n-a", dest="n_a", type=int)
    p.add_argument("--selected-k", dest="selected_k", type=int)
    p.add_argument("--truncate-qubits", dest="truncate_qubits", type=int)
    p.add_argument("--n-trees", dest="n_trees", type=int)
    p.add_argument("--max-depth", dest="max_depth", type=int)
    p.add_argument("--min-split", dest="min_split", type=int)
    p.add_argument("--k-folds", dest="k_folds", type=int)
    p.add_argument("--seed", type=int)
    _add_layout_flags(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("spectra", help="export power and density spectra CSVs")
    p.add_argument("--out")
    p.add_argument("--config")
    p.add_argument("--data")
    p.add_argument("--field-id", dest="field_id", type=int)
    p.add_argument("--alpha", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--n-a", dest="n_a", type=int)
    p.add_argument("--selected-k", dest="selected_k", type=int)
    p.add_argument("--truncate-qubits", dest="truncate_qubits", type=int)
    p.add_argument("--dump-state", dest="dump_state", action="store_const", const=True)
    _add_layout_flags(p)
    p.set_defaults(func=cmd_spectra)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
