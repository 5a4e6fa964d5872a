"""Run configuration: a JSON document with strictly checked nested keys.

Example::

    {
      "seed": 0,
      "network": {"hidden": [64]},
      "data": {"synthetic": {"n_per_class": 200, "dim": 10, "separation": 0.4,
                             "classes": 2, "n_test": 100}},
      "attack": {"epsilon": 0.1, "step_size": 0.025, "steps": 10},
      "curriculum": {"metric": "prob_gap",
                     "schedule": {"kind": "linear", "start_epoch": 2, "start_value": 0.0,
                                  "end_epoch": 8, "end_value": 1.0}},
      "train": {"epochs": 10, "batch_size": 128, "lr": 0.05},
      "diagnostics": {"smoothness": false, "landscape": false}
    }

Data sources (exactly one): ``idx`` (``train_images``, ``train_labels``,
``test_images``, ``test_labels``), ``synthetic`` or ``mnist_preset``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .attack import AttackConfig
from .curriculum import CurriculumConfig, Schedule
from .data import Dataset, load_idx, mnist_preset, synth_gaussians, train_test_split
from .hessian import ProbeConfig
from .network import NetworkSpec
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


def _check_keys(section: str, d, allowed, required=()):
    if not isinstance(d, dict):
        raise ConfigError(f"{section}: expected an object")
    extra = set(d) - set(allowed)
    if extra:
        raise ConfigError(f"{section}: unknown keys {sorted(extra)}")
    missing = set(required) - set(d)
    if missing:
        raise ConfigError(f"{section}: missing keys {sorted(missing)}")


_ATTACK_KEYS = set(AttackConfig.__dataclass_fields__)
_PROBE_KEYS = set(ProbeConfig.__dataclass_fields__)
_TRAIN_KEYS = {"epochs", "batch_size", "lr", "lr_decay", "momentum", "weight_decay"}
_SYNTH_KEYS = {"n_per_class", "dim", "separation", "classes", "sigma", "n_test", "seed"}
_IDX_KEYS = {"train_images", "train_labels", "test_images", "test_labels"}
_MNIST_KEYS = {"n_train", "n_test", "seed", "directory"}
_DIAG_KEYS = {"smoothness", "smoothness_samples", "landscape", "landscape_samples",
              "landscape_points", "landscape_range", "hutchinson_probes"}


@dataclass
class Diagnostics:
    smoothness: bool = False
    smoothness_samples: int = 128
    landscape: bool = False
    landscape_samples: int = 100
    landscape_points: int = 21
    landscape_range: float = 1.0
    hutchinson_probes: int = 100


@dataclass
class RunConfig:
    seed: int
    network: dict
    data: dict
    attack: AttackConfig
    eval_attack: AttackConfig | None
    curriculum: CurriculumConfig
    train: dict
    output: str | None = None
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    def load_data(self, base_dir=None) -> tuple[Dataset, Dataset]:
        kind, opts = next(iter(self.data.items()))
        if kind == "idx":
            base = Path(base_dir or ".")
            p = {k: base / v for k, v in opts.items()}
            return (load_idx(p["train_images"], p["train_labels"]),
                    load_idx(p["test_images"], p["test_labels"]))
        if kind == "synthetic":
            full = synth_gaussians(opts["n_per_class"], opts["dim"], opts["separation"],
                                   opts.get("classes", 2), opts.get("seed", self.seed),
                                   opts.get("sigma", 0.1))
            return train_test_split(full, opts.get("n_test", len(full) // 5),
                                    seed=opts.get("seed", self.seed))
        return mnist_preset(opts.get("n_train", 2000), opts.get("n_test", 1000),
                            opts.get("seed", 0), opts.get("directory"))

    def network_spec(self, n_inputs: int, n_classes: int) -> NetworkSpec:
        if "layer_sizes" in self.network:
            sizes = tuple(self.network["layer_sizes"])
            if sizes[0] != n_inputs or sizes[-1] != n_classes:
                raise ConfigError(
                    f"network.layer_sizes {sizes} do not match data ({n_inputs} inputs, "
                    f"{n_classes} classes)")
        else:
            sizes = (n_inputs, *self.network.get("hidden", ()), n_classes)
        return NetworkSpec(sizes, self.network.get("seed", self.seed))

    def train_config(self, spec: NetworkSpec) -> TrainConfig:
        t = dict(self.train)
        if "lr_decay" in t:
            t["lr_decay"] = tuple(tuple(k) for k in t["lr_decay"])
        return TrainConfig(spec=spec, attack=self.attack, curriculum=self.curriculum,
                           seed=self.seed, eval_attack=self.eval_attack, **t)

    def to_dict(self) -> dict:
        cur = self.curriculum
        out = {
            "seed": self.seed,
            "network": self.network,
            "data": self.data,
            "attack": asdict(self.attack),
            "curriculum": {"metric": cur.metric, "schedule": cur.schedule.to_dict(),
                           "probe": asdict(cur.probe), "recompute_every": cur.recompute_every},
            "train": self.train,
            "diagnostics": asdict(self.diagnostics),
        }
        if self.eval_attack is not None:
            out["eval_attack"] = asdict(self.eval_attack)
        if self.output is not None:
            out["output"] = self.output
        return out


def parse_config(d: dict) -> RunConfig:
    _check_keys("config", d, {"seed", "network", "data", "attack", "eval_attack", "curriculum",
                              "train", "output", "diagnostics"}, required=("data",))
    seed = d.get("seed", 0)
    if not isinstance(seed, int) or seed < 0 or seed >= 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")

    network = d.get("network", {})
    _check_keys("network", network, {"hidden", "layer_sizes", "seed"})
    if "hidden" in network and "layer_sizes" in network:
        raise ConfigError("network: give either hidden or layer_sizes, not both")

    data = d["data"]
    _check_keys("data", data, {"idx", "synthetic", "mnist_preset"})
    if len(data) != 1:
        raise ConfigError("data: exactly one source (idx, synthetic or mnist_preset) required")
    kind, opts = next(iter(data.items()))
    if kind == "idx":
        _check_keys("data.idx", opts, _IDX_KEYS, required=_IDX_KEYS)
    elif kind == "synthetic":
        _check_keys("data.synthetic", opts, _SYNTH_KEYS,
                    required=("n_per_class", "dim", "separation"))
    else:
        _check_keys("data.mnist_preset", opts, _MNIST_KEYS)

    try:
        a = d.get("attack", {})
        _check_keys("attack", a, _ATTACK_KEYS)
        attack = AttackConfig(**a)
        eval_attack = None
        if "eval_attack" in d:
            _check_keys("eval_attack", d["eval_attack"], _ATTACK_KEYS)
            eval_attack = AttackConfig(**d["eval_attack"])

        c = d.get("curriculum", {})
        _check_keys("curriculum", c, {"metric", "schedule", "probe", "recompute_every"})
        probe = c.get("probe", {})
        _check_keys("curriculum.probe", probe, _PROBE_KEYS)
        curriculum = CurriculumConfig(
            metric=c.get("metric", "none"),
            schedule=Schedule.from_dict(c.get("schedule", {"kind": "constant", "value": 1.0})),
            probe=ProbeConfig(**probe), recompute_every=c.get("recompute_every", 1))

        train = d.get("train", {})
        _check_keys("train", train, _TRAIN_KEYS)
        diag = d.get("diagnostics", {})
        _check_keys("diagnostics", diag, _DIAG_KEYS)
        diagnostics = Diagnostics(**diag)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc

    return RunConfig(seed=seed, network=network, data=data, attack=attack,
                     eval_attack=eval_attack, curriculum=curriculum, train=train,
                     output=d.get("output"), diagnostics=diagnostics)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(raw)
