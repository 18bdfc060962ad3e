"""Model parameters for the path-based decoder and its ablation variants, and
the JSON checkpoint format."""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointVersionError, ConfigError, ParseError, ValidationError
from .features import AGENT_DIM, AGENT_PATH_RAW_DIM, GOAL_RAW_DIM, PATH_RAW_DIM
from .nn import MLP

FORMAT_VERSION = 1
VARIANTS = ("pbp", "pbp_cartesian", "goal_based", "multimodal_regression")


@dataclass
class ModelParams:
    variant: str
    heads: dict = field(default_factory=dict)
    agent_dim: int = AGENT_DIM
    path_dim: int = 16
    agent_path_dim: int = 16
    hidden: int = 64
    n_modes: int = 6
    history_steps: int = 20
    future_steps: int = 30

    @property
    def uses_paths(self) -> bool:
        return self.variant in ("pbp", "pbp_cartesian")

    @property
    def frenet(self) -> bool:
        return self.variant == "pbp"

    @property
    def arrays(self) -> list:
        out = []
        for name in sorted(self.heads):
            out.extend(self.heads[name].arrays)
        return out

    def head_specs(self) -> dict:
        return head_specs(self.variant, self.agent_dim, self.path_dim, self.agent_path_dim, self.hidden,
                          self.n_modes, self.history_steps, self.future_steps)

    def copy(self) -> "ModelParams":
        new = ModelParams(**{k: getattr(self, k) for k in self._dims()}, variant=self.variant)
        new.heads = {k: v.copy() for k, v in self.heads.items()}
        return new

    @staticmethod
    def _dims():
        return ("agent_dim", "path_dim", "agent_path_dim", "hidden", "n_modes", "history_steps", "future_steps")

    def validate(self):
        specs = self.head_specs()
        if set(specs) != set(self.heads):
            raise ValidationError(f"heads {sorted(self.heads)} do not match variant '{self.variant}'")
        for name, sizes in specs.items():
            mlp = self.heads[name]
            if mlp.sizes != tuple(sizes):
                raise ValidationError(f"head '{name}': sizes {mlp.sizes} != expected {tuple(sizes)}")
            for w, (a, b) in zip(mlp.weights, zip(sizes[:-1], sizes[1:])):
                if w.shape != (a, b):
                    raise ValidationError(f"head '{name}': weight shape {w.shape} != {(a, b)}")
            if not all(np.all(np.isfinite(x)) for x in mlp.arrays):
                raise ValidationError(f"head '{name}': non-finite parameters")


def head_specs(variant, agent_dim=AGENT_DIM, path_dim=16, agent_path_dim=16, hidden=64, n_modes=6,
               history_steps=20, future_steps=30) -> dict:
    """Layer sizes of every head for a decoder variant."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown decoder '{variant}' (expected one of {', '.join(VARIANTS)})")
    h = (hidden, hidden)
    multimodal = (agent_dim, *h, n_modes * 2 * future_steps + n_modes)
    if variant == "multimodal_regression":
        return {"multimodal": multimodal}
    hist = 2 * history_steps
    specs = {"path_free": multimodal, "selector": (agent_dim, *h, 1)}
    if variant == "goal_based":
        specs["goal_encoder"] = (GOAL_RAW_DIM, *h, path_dim)
        specs["classifier"] = (agent_dim + path_dim, *h, 1)
        specs["regressor"] = (agent_dim + path_dim + hist, *h, 2 * future_steps)
    else:
        specs["path_encoder"] = (PATH_RAW_DIM, *h, path_dim)
        specs["agent_path_encoder"] = (AGENT_PATH_RAW_DIM, *h, agent_path_dim)
        specs["classifier"] = (agent_dim + path_dim + agent_path_dim, *h, 1)
        specs["regressor"] = (agent_dim + path_dim + hist, *h, 2 * future_steps)
    return specs


def init_params(variant="pbp", seed=0, **dims) -> ModelParams:
    """Random initialisation. Each head draws from its own stream keyed by
    ``(seed, head name)``, so heads shared between variants start identical."""
    params = ModelParams(variant, **dims)
    for name, sizes in params.head_specs().items():
        rng = np.random.default_rng([seed, zlib.crc32(name.encode())])
        params.heads[name] = MLP(sizes, rng)
    params.validate()
    return params


def zero_params(variant="pbp", **dims) -> ModelParams:
    params = ModelParams(variant, **dims)
    params.heads = {name: MLP(sizes) for name, sizes in params.head_specs().items()}
    return params


def params_to_dict(params: ModelParams) -> dict:
    heads = {}
    for name in sorted(params.heads):
        mlp = params.heads[name]
        flat = np.concatenate([a.ravel() for a in mlp.arrays])
        heads[name] = {"sizes": list(mlp.sizes), "params": flat.tolist()}
    return {
        "format_version": FORMAT_VERSION,
        "variant": params.variant,
        "dims": {k: getattr(params, k) for k in ModelParams._dims()},
        "heads": heads,
    }


def params_from_dict(doc: dict) -> ModelParams:
    if not isinstance(doc, dict):
        raise ValidationError("checkpoint must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"checkpoint format_version {version!r} is not supported (expected {FORMAT_VERSION})")
    try:
        params = ModelParams(doc["variant"], **doc["dims"])
        for name, spec in doc["heads"].items():
            sizes = tuple(int(s) for s in spec["sizes"])
            flat = np.asarray(spec["params"], dtype=float)
            mlp = MLP(sizes)
            expected = sum(a.size for a in mlp.arrays)
            if flat.size != expected:
                raise ValidationError(f"head '{name}': {flat.size} parameters, expected {expected}")
            pos = 0
            for arr in mlp.arrays:
                arr[...] = flat[pos:pos + arr.size].reshape(arr.shape)
                pos += arr.size
            params.heads[name] = mlp
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed checkpoint: {exc}") from None
    params.validate()
    return params


def dumps_params(params: ModelParams) -> str:
    # json float repr is shortest round-trip, so the checkpoint is bit exact
    return json.dumps(params_to_dict(params), separators=(",", ":"))


def save_params(params: ModelParams, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_params(params))


def loads_params(text: str) -> ModelParams:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed checkpoint JSON: {exc.msg}", offset=len(text[: exc.pos].encode("utf-8"))) from None
    return params_from_dict(doc)


def load_params(path) -> ModelParams:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError("checkpoint is not valid UTF-8", offset=exc.start) from None
    return loads_params(text)
