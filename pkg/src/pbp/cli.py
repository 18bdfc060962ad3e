"""Command-line entry point: ``pbp {generate,train,predict,eval,ablate}``."""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys
from dataclasses import fields

from .ablation import AblationConfig, ablation_csv, evaluate_scenes, run_ablate
from .errors import ConfigError, ParseError, PBPError
from .lane_graph import load_scene
from .model import VARIANTS, load_params, save_params
from .predictor import PredictConfig, predict
from .sampler import SamplerConfig
from .scenario_gen import GenConfig, generate, split, write_scenes
from .trainer import TrainConfig, history_csv, train

_SECTIONS = ("generate", "sampler", "train", "predict", "ablate")
_EXTRA_KEYS = {"decoder", "decoders", "train_fraction", "workers"}


def _known_keys():
    keys = set(_EXTRA_KEYS)
    for cls in (GenConfig, SamplerConfig, TrainConfig, PredictConfig):
        keys |= {f.name for f in fields(cls)}
    return keys


def load_config(path) -> dict:
    """Flat parameter dictionary; top-level sections are merged in."""
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        raw = fh.read()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed config JSON: {exc.msg}", offset=len(raw[: exc.pos].encode("utf-8"))) from None
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    flat = {}
    for k, v in doc.items():
        if k in _SECTIONS and isinstance(v, dict):
            flat.update(v)
        else:
            flat[k] = v
    unknown = sorted(set(flat) - _known_keys())
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return flat


def _merge(cfg, args, mapping):
    """Overlay command-line values (when given) onto config-file values."""
    out = dict(cfg)
    for flag, key in mapping.items():
        val = getattr(args, flag, None)
        if val is not None:
            out[key] = val
    return out


def _seed(args, cfg):
    return int(args.seed if getattr(args, "seed", None) is not None else cfg.get("seed", 0))


def _workers(args, cfg):
    return int(args.workers if getattr(args, "workers", None) is not None else cfg.get("workers", 1))


def _out(args, default=None):
    out = getattr(args, "out", None) or default
    if out is None:
        raise ConfigError("--out is required")
    return out


def load_scene_dir(directory) -> list:
    files = sorted(glob.glob(os.path.join(directory, "*.json")))
    if not files:
        raise ConfigError(f"no scene files found in '{directory}'")
    return [load_scene(f) for f in files]


def _write(path, text):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _stem(path):
    return os.path.splitext(path)[0]


def plot_offroad_svg(curves: dict, path, dt=0.1):
    """Static SVG of offroad rate vs. horizon for one or more decoders."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "pbp", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for name, curve in curves.items():
            ax.plot([dt * (i + 1) for i in range(len(curve))], curve, label=name)
        ax.set_xlabel("horizon (s)")
        ax.set_ylabel("offroad rate")
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


# ---------------------------------------------------------------- subcommands

def cmd_generate(args, cfg):
    cfg = _merge(cfg, args, {"layout": "layout", "n_scenes": "n_scenes", "path_free_fraction": "path_free_fraction",
                             "noise_sigma": "lateral_noise_sigma"})
    cfg["seed"] = _seed(args, cfg)
    gen = GenConfig.from_dict(cfg)
    paths = write_scenes(generate(gen), _out(args))
    print(f"wrote {len(paths)} scenes to {_out(args)}")


def _train_config(args, cfg):
    cfg = _merge(cfg, args, {"epochs": "epochs", "lr": "learning_rate", "lambda_cls": "lambda_cls",
                             "lambda_lateral": "lambda_lateral", "weight_decay": "weight_decay",
                             "batch_size": "batch_size"})
    cfg["seed"] = _seed(args, cfg)
    return TrainConfig.from_dict(cfg)


def cmd_train(args, cfg):
    tcfg = _train_config(args, cfg)
    decoder = args.decoder or cfg.get("decoder", "pbp")
    scenes = load_scene_dir(args.scenes)
    out = _out(args, "model.json")
    params, history = train(scenes, tcfg, decoder, sampler=SamplerConfig.from_dict(cfg))
    save_params(params, out)
    csv = history_csv(history)
    _write(args.history or _stem(out) + ".csv", csv)
    sys.stdout.write(csv)


def cmd_predict(args, cfg):
    params = load_params(args.model)
    scene = load_scene(args.scene)
    pred = predict(params, scene, args.agent_id, PredictConfig.from_dict(cfg))
    text = json.dumps(pred.to_dict(), separators=(",", ":"))
    out = getattr(args, "out", None)
    if out:
        _write(out, text)
    else:
        sys.stdout.write(text + "\n")


def cmd_eval(args, cfg):
    params = load_params(args.model)
    scenes = load_scene_dir(args.scenes)
    report, _ = evaluate_scenes(params, scenes, PredictConfig.from_dict(cfg), workers=_workers(args, cfg))
    out = _out(args, "report.json")
    _write(out, json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    _write(args.offroad_csv or _stem(out) + "_offroad.csv", report.horizon_csv())
    if args.svg:
        plot_offroad_svg({params.variant: report.offroad_by_horizon}, args.svg)
    print(f"minADE_6={report.min_ade[6]:.4f} minFDE_6={report.min_fde[6]:.4f} MR_6={report.miss_rate[6]:.4f} "
          f"offroad={report.offroad_rate:.5f} lane_dev={report.lane_deviation:.4f}")


def cmd_ablate(args, cfg):
    decoders = args.decoders or cfg.get("decoders") or list(VARIANTS)
    if isinstance(decoders, str):
        decoders = decoders.split(",")
    acfg = AblationConfig(decoders, _train_config(args, cfg), PredictConfig.from_dict(cfg), _workers(args, cfg))
    if args.val_scenes:
        train_scenes, val_scenes = load_scene_dir(args.scenes), load_scene_dir(args.val_scenes)
    else:
        frac = args.train_fraction or cfg.get("train_fraction", 0.8)
        train_scenes, val_scenes = split(load_scene_dir(args.scenes), frac, acfg.train.seed)
    results = run_ablate(train_scenes, val_scenes, acfg)
    out = _out(args, "ablation.csv")
    _write(out, ablation_csv(results))
    for decoder, (_, _, report) in results.items():
        _write(f"{_stem(out)}_{decoder}_offroad.csv", report.horizon_csv())
    if args.svg:
        plot_offroad_svg({d: r[2].offroad_by_horizon for d, r in results.items()}, args.svg)
    sys.stdout.write(ablation_csv(results))


# ---------------------------------------------------------------- parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"E_USAGE: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed")
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON file of parameters")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output path")

    parser = _Parser(prog="pbp", description="Path-based trajectory prediction.", parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", parents=[common], help="write synthetic scenes")
    p.add_argument("--layout")
    p.add_argument("--n-scenes", dest="n_scenes", type=int)
    p.add_argument("--path-free-fraction", dest="path_free_fraction", type=float)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    p.set_defaults(func=cmd_generate)

    def train_flags(q):
        q.add_argument("--epochs", type=int)
        q.add_argument("--lr", type=float)
        q.add_argument("--lambda-cls", dest="lambda_cls", type=float)
        q.add_argument("--lambda-lateral", dest="lambda_lateral", type=float)
        q.add_argument("--weight-decay", dest="weight_decay", type=float)
        q.add_argument("--batch-size", dest="batch_size", type=int)

    p = sub.add_parser("train", parents=[common], help="train a model")
    p.add_argument("--scenes", required=True)
    p.add_argument("--decoder", choices=VARIANTS)
    p.add_argument("--history", help="per-epoch loss CSV (default: <out>.csv)")
    train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="predict one agent")
    p.add_argument("--model", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--agent-id", dest="agent_id", type=int)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", parents=[common], help="evaluate a model on scenes")
    p.add_argument("--model", required=True)
    p.add_argument("--scenes", required=True)
    p.add_argument("--offroad-csv", dest="offroad_csv")
    p.add_argument("--svg")
    p.add_argument("--workers", type=int, help="processes for scene evaluation (default 1)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", parents=[common], help="compare decoders")
    p.add_argument("--scenes", required=True, help="training scenes (split when --val-scenes is absent)")
    p.add_argument("--val-scenes", dest="val_scenes")
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--decoders", type=lambda s: s.split(","))
    p.add_argument("--svg")
    p.add_argument("--workers", type=int, help="processes for scene evaluation (default 1)")
    train_flags(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(getattr(args, "config", None))
        args.func(args, cfg)
    except PBPError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"E_IO: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
