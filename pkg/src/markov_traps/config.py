"""Experiment configuration: a YAML file validated into :class:`ExperimentConfig`.

Example::

    chain: {kind: zd, d: 3}
    x0: [0, 0, 0]
    field: {kind: radial, beta: 2.0, offset: 1.0}
    mode: both
    estimator: exponential
    horizons: [100, 1000]
    radii: [5, 10]
    n_samples: 10000
    seed: 1

Validation collects every problem before failing, so one
:class:`~markov_traps.exceptions.ConfigError` lists all offending fields.
"""

from dataclasses import asdict, dataclass, field as dc_field

import yaml

from .chains import DeterministicDrift, DriftTree, LazyLine, SimpleWalkZd, TreeWithChains
from .exceptions import ConfigError, EncodingError
from .fields import (
    AlternatingShellField,
    BlobSet,
    ChainEndField,
    ConstantField,
    ConstantOnSet,
    EuclideanBall,
    RadialField,
    ZeroField,
)

CHAIN_KINDS = ("lazy_line", "zd", "drift", "drift_tree", "tree_with_chains")
FIELD_KINDS = ("zero", "constant", "constant_on_set", "radial", "chain_end", "alternating_shells")
SET_KINDS = ("blob", "ball")
MODES = ("quenched", "annealed", "both")
ESTIMATORS = ("direct", "exponential", "both")

_DEFAULT_X0 = {"lazy_line": 2, "drift": 0, "drift_tree": [], "tree_with_chains": [[], 0]}


@dataclass
class ExperimentConfig:
    chain: dict = dc_field(default_factory=lambda: {"kind": "lazy_line"})
    x0: object = None
    field: dict = dc_field(default_factory=lambda: {"kind": "zero"})
    mode: str = "both"
    estimator: str = "exponential"
    horizons: list = dc_field(default_factory=lambda: [1000])
    radii: list = dc_field(default_factory=lambda: [10])
    n_samples: int = 1000
    seed: int = 0
    alpha: float = 0.5
    C: float = 2.0
    C_prime: float = 4.0
    z: float = 4.0
    target: object = None
    pairs: int = 0
    workers: int = 1
    out: str = "results"

    def to_dict(self):
        return asdict(self)

    # -- builders ---------------------------------------------------------
    def build_chain(self):
        kind = self.chain["kind"]
        if kind == "lazy_line":
            return LazyLine()
        if kind == "drift":
            return DeterministicDrift()
        if kind == "zd":
            return SimpleWalkZd(int(self.chain.get("d", 3)))
        if kind == "drift_tree":
            return DriftTree()
        return TreeWithChains()

    def state(self, chain, raw):
        """Config list/int representation -> natural state of ``chain``."""
        if isinstance(chain, SimpleWalkZd):
            return tuple(int(v) for v in raw)
        if isinstance(chain, DriftTree):
            return tuple(int(v) for v in raw)
        if isinstance(chain, TreeWithChains):
            bits, k = raw
            return tuple(int(v) for v in bits), int(k)
        return int(raw)

    def start(self, chain):
        return self.state(chain, self.x0)

    def build_field(self, chain):
        spec = self.field
        kind = spec["kind"]
        if kind == "zero":
            return ZeroField(chain)
        if kind == "constant":
            return ConstantField(chain, spec["c"])
        if kind == "constant_on_set":
            return ConstantOnSet(chain, self.build_set(chain, spec["set"]), spec["c"])
        if kind == "radial":
            return RadialField(chain, spec["beta"], spec.get("cap", 0.5), spec.get("offset", 0.0))
        if kind == "chain_end":
            return ChainEndField(chain, spec.get("cap", 0.5))
        return AlternatingShellField(chain, spec["q_even"], spec["q_odd"])

    def build_set(self, chain, spec):
        if spec["kind"] == "blob":
            return BlobSet(chain, int(spec.get("n_max", 8)))
        return EuclideanBall(chain, tuple(spec["center"]), int(spec["radius_sq"]))


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def validate(raw):
    """Validate a mapping into an :class:`ExperimentConfig` or raise :class:`ConfigError`."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError([{"field": "<root>", "message": "config must be a mapping"}])
    errors = []

    def bad(name, msg):
        errors.append({"field": name, "message": msg})

    known = set(ExperimentConfig.__dataclass_fields__)
    for k in sorted(set(raw) - known):
        bad(k, "unknown key")
    cfg = ExperimentConfig(**{k: v for k, v in raw.items() if k in known})

    # chain
    if not isinstance(cfg.chain, dict) or cfg.chain.get("kind") not in CHAIN_KINDS:
        bad("chain.kind", f"must be one of {list(CHAIN_KINDS)}")
        cfg.chain = {"kind": "lazy_line"}
    elif cfg.chain["kind"] == "zd":
        d = cfg.chain.get("d", 3)
        if not _is_int(d) or not 1 <= d <= 8:
            bad("chain.d", "must be an integer in 1..8")
            cfg.chain = {"kind": "zd", "d": 3}
    chain = cfg.build_chain()

    # start state
    if cfg.x0 is None:
        cfg.x0 = _DEFAULT_X0.get(cfg.chain["kind"], [0] * getattr(chain, "d", 0))
    try:
        chain.encode(cfg.start(chain))
    except (EncodingError, TypeError, ValueError) as exc:
        bad("x0", f"invalid start state for {cfg.chain['kind']}: {exc}")
    if cfg.target is not None:
        try:
            chain.encode(cfg.state(chain, cfg.target))
        except (EncodingError, TypeError, ValueError) as exc:
            bad("target", f"invalid state: {exc}")

    # field
    spec = cfg.field
    if not isinstance(spec, dict) or spec.get("kind") not in FIELD_KINDS:
        bad("field.kind", f"must be one of {list(FIELD_KINDS)}")
    else:
        kind = spec["kind"]
        probs = {"constant": ["c"], "constant_on_set": ["c"], "alternating_shells": ["q_even", "q_odd"]}
        for name in probs.get(kind, []):
            v = spec.get(name)
            if not _is_num(v) or not 0 <= v < 1:
                bad(f"field.{name}", "must be a probability in [0, 1)")
        if "cap" in spec and (not _is_num(spec["cap"]) or not 0 <= spec["cap"] < 1):
            bad("field.cap", "must be a probability in [0, 1)")
        if kind == "radial":
            if not _is_num(spec.get("beta")) or spec["beta"] < 0:
                bad("field.beta", "must be a nonnegative number")
            if "offset" in spec and (not _is_num(spec["offset"]) or spec["offset"] < 0):
                bad("field.offset", "must be a nonnegative number")
        if kind == "chain_end" and cfg.chain["kind"] != "tree_with_chains":
            bad("field.kind", "chain_end needs chain.kind = tree_with_chains")
        if kind == "constant_on_set":
            s = spec.get("set")
            if not isinstance(s, dict) or s.get("kind") not in SET_KINDS:
                bad("field.set.kind", f"must be one of {list(SET_KINDS)}")
            elif s["kind"] == "blob":
                if cfg.chain["kind"] != "zd" or cfg.chain.get("d", 3) != 3:
                    bad("field.set.kind", "the blob set needs chain zd with d = 3")
                n_max = s.get("n_max", 8)
                if not _is_int(n_max) or not 1 <= n_max <= 20:
                    bad("field.set.n_max", "must be an integer in 1..20")
            elif s["kind"] == "ball":
                if cfg.chain["kind"] != "zd":
                    bad("field.set.kind", "balls need chain zd")
                if not isinstance(s.get("center"), list) or len(s["center"]) != getattr(chain, "d", -1):
                    bad("field.set.center", "must be a list of d integers")
                if not _is_int(s.get("radius_sq")) or s["radius_sq"] < 0:
                    bad("field.set.radius_sq", "must be a nonnegative integer")

    # scalars and sequences
    if cfg.mode not in MODES:
        bad("mode", f"must be one of {list(MODES)}")
    if cfg.estimator not in ESTIMATORS:
        bad("estimator", f"must be one of {list(ESTIMATORS)}")
    if (not isinstance(cfg.horizons, list) or not cfg.horizons
            or not all(_is_int(h) and h >= 0 for h in cfg.horizons)):
        bad("horizons", "must be a nonempty list of nonnegative integers")
    else:
        cfg.horizons = sorted(set(cfg.horizons))
    if not isinstance(cfg.radii, list) or not cfg.radii or not all(_is_int(r) and r >= 0 for r in cfg.radii):
        bad("radii", "must be a nonempty list of nonnegative integers")
    else:
        cfg.radii = sorted(set(cfg.radii))
    if not _is_int(cfg.n_samples) or cfg.n_samples < 1:
        bad("n_samples", "must be a positive integer")
    if not _is_int(cfg.seed) or not 0 <= cfg.seed < 2**64:
        bad("seed", "must be an integer in [0, 2^64)")
    if not _is_num(cfg.alpha) or not 0 < cfg.alpha < 1:
        bad("alpha", "must lie in (0, 1)")
    for name in ("C", "C_prime"):
        if not _is_num(getattr(cfg, name)) or not getattr(cfg, name) > 1:
            bad(name, "must be a number > 1")
    if not _is_num(cfg.z) or cfg.z <= 0:
        bad("z", "must be positive")
    if not _is_int(cfg.pairs) or cfg.pairs < 0:
        bad("pairs", "must be a nonnegative integer (0 = all pairs)")
    if not _is_int(cfg.workers) or cfg.workers < 1:
        bad("workers", "must be a positive integer")
    if not isinstance(cfg.out, str) or not cfg.out:
        bad("out", "must be a nonempty path")

    if errors:
        raise ConfigError(errors)
    return cfg


def read_raw(path):
    """Read a YAML config file into a plain mapping without validating it."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError([{"field": "<file>", "message": str(exc)}]) from None
    except yaml.YAMLError as exc:
        raise ConfigError([{"field": "<file>", "message": f"YAML parse error: {exc}"}]) from None
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError([{"field": "<root>", "message": "config must be a mapping"}])
    return raw


def load(path):
    """Read and validate a YAML config file."""
    return validate(read_raw(path))
