"""Strict parsing of experiment configuration documents.

A document is INI-style::

    [experiment]
    kind = test-theorem
    replicas = 10000
    seed = 1

    [law]
    family = gaussian
    count = deterministic 2
    parameters = mean=1.3862943611198906, variance=1.3862943611198906

    [sim]
    n = 1024

Explicit laws list one atom per line as ``probability : x1, x2, ...``
(an atom with no children is written ``probability :``).  Every key not
listed in ``SCHEMA`` is an error.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
import re
from dataclasses import asdict, dataclass, field, replace

from .. import laws
from ..engine import SimConfig
from ..errors import ConfigError, LawError

KINDS = ("validate", "reduce", "simulate", "estimate-cm", "test-theorem", "diagnose")
FAMILIES = ("canonical", "gaussian", "two-point", "uniform", "explicit")

SCHEMA = {
    "experiment": ("kind", "replicas", "workers", "seed", "out"),
    "law": ("family", "count", "parameters", "atoms"),
    "sim": ("n", "barrier", "eps_record", "kappa", "max_generation", "max_pop"),
    "stats": ("window", "bootstrap", "min_tail", "pool_size", "points", "alpha"),
}

FAMILY_PARAMS = {
    "gaussian": ("mean", "variance"),
    "two-point": ("a", "b", "p"),
    "uniform": ("lo", "hi"),
}


@dataclass(frozen=True)
class StatsConfig:
    window: tuple = (3.0, 8.0)
    bootstrap: int = 200
    min_tail: int = 200
    pool_size: int = 0
    points: tuple = ()
    alpha: float = 0.01


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    law: object
    sim: SimConfig = field(default_factory=SimConfig)
    stats: StatsConfig = field(default_factory=StatsConfig)
    replicas: int = 1
    workers: int = 1
    out: str = "."
    source: dict = field(default_factory=dict, compare=False)

    @property
    def seed(self):
        return self.sim.seed

    def resolved(self):
        """JSON-able view of every effective setting (used for hashing)."""
        return {
            "kind": self.kind,
            "law": laws.law_to_dict(self.law),
            "sim": asdict(self.sim),
            "stats": {k: list(v) if isinstance(v, tuple) else v
                      for k, v in asdict(self.stats).items()},
            "replicas": self.replicas,
        }

    def digest(self):
        text = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def with_overrides(self, seed=None, replicas=None, workers=None, n=None, barrier=None,
                       eps_record=None, out=None):
        sim = self.sim
        changes = {}
        if seed is not None:
            changes["seed"] = seed
        if n is not None:
            changes["measure_n"] = n
            if sim.max_generation == sim.measure_n + 10_000:
                changes["max_generation"] = 0
        if barrier is not None:
            changes["barrier"] = barrier
        if eps_record is not None:
            changes["eps_record"] = eps_record
        if changes:
            try:
                sim = replace(sim, **changes)
            except ValueError as exc:
                raise ConfigError([f"command line: {exc}"]) from None
        cfg = replace(
            self,
            sim=sim,
            replicas=self.replicas if replicas is None else replicas,
            workers=self.workers if workers is None else workers,
            out=self.out if out is None else out,
        )
        problems = _check_counts(cfg.replicas, cfg.workers, "command line")
        if problems:
            raise ConfigError(problems)
        return cfg


def _check_counts(replicas, workers, where):
    problems = []
    if replicas < 1:
        problems.append(f"{where}: replicas: must be >= 1, got {replicas}")
    if workers < 1:
        problems.append(f"{where}: workers: must be >= 1, got {workers}")
    return problems


_KEY_RE = re.compile(r"^([^\s#;=:\[][^=:]*?)\s*[=:]")
_SECTION_RE = re.compile(r"^\[([^\]]+)\]")


def _line_index(text):
    """Map (section, key) to the 1-based line where the key is set."""
    where, section = {}, None
    for i, raw in enumerate(text.splitlines(), 1):
        if not raw or raw[0].isspace():
            continue  # continuation line
        m = _SECTION_RE.match(raw)
        if m:
            section = m.group(1).strip()
            where[(section, None)] = i
            continue
        m = _KEY_RE.match(raw)
        if m:
            where[(section, m.group(1).strip().lower())] = i
    return where


class _Fields:
    """Typed access to one section, collecting problems instead of raising."""

    def __init__(self, parser, section, lines, problems):
        self.section = section
        self.data = parser[section] if parser.has_section(section) else {}
        self.lines = lines
        self.problems = problems

    def loc(self, key):
        line = self.lines.get((self.section, key))
        return f"line {line}: " if line else ""

    def error(self, key, msg):
        self.problems.append(f"{self.loc(key)}[{self.section}] {key}: {msg}")

    def get(self, key, conv, default=None, required=False):
        if key not in self.data:
            if required:
                self.error(key, "missing required key")
            return default
        raw = self.data[key].strip()
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            self.error(key, f"cannot parse {raw!r} ({exc})")
            return default


def _int(raw):
    value = float(raw)
    if not value.is_integer():
        raise ValueError("expected an integer")
    return int(value)


def _floats(raw):
    return tuple(float(x) for x in raw.replace(",", " ").split())


def _ints(raw):
    return tuple(_int(x) for x in raw.replace(",", " ").split())


def _params(raw):
    out = {}
    for item in filter(None, (p.strip() for p in raw.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"expected name=value, got {item!r}")
        out[key.strip()] = float(value)
    return out


def _count(raw):
    parts = raw.split()
    if len(parts) != 2 or parts[0].lower() not in ("deterministic", "poisson"):
        raise ValueError("expected 'deterministic K' or 'poisson LAMBDA'")
    if parts[0].lower() == "deterministic":
        return laws.Deterministic(_int(parts[1]))
    return laws.Poisson(float(parts[1]))


def _atoms(raw):
    atoms = []
    for line in filter(None, (ln.strip() for ln in raw.splitlines())):
        prob, sep, kids = line.partition(":")
        if not sep:
            raise ValueError(f"atom {line!r} is not 'probability : x1, x2, ...'")
        atoms.append((float(prob), [float(x) for x in kids.replace(",", " ").split()]))
    return atoms


def _build_law(f):
    family = f.get("family", str.lower, required=True)
    if family is None:
        return None
    if family not in FAMILIES:
        f.error("family", f"unknown family {family!r}; expected one of {', '.join(FAMILIES)}")
        return None
    if family == "canonical":
        for key in ("count", "parameters", "atoms"):
            if key in f.data:
                f.error(key, "not used by the canonical law")
        return laws.canonical_law()
    if family == "explicit":
        for key in ("count", "parameters"):
            if key in f.data:
                f.error(key, "not used by explicit laws")
        atoms = f.get("atoms", _atoms, required=True)
        if atoms is None:
            return None
        try:
            return laws.Explicit(atoms)
        except LawError as exc:
            f.error("atoms", str(exc))
            return None
    if "atoms" in f.data:
        f.error("atoms", f"not used by the {family} family")
    count = f.get("count", _count, required=True)
    params = f.get("parameters", _params, required=True)
    if count is None or params is None:
        return None
    want = FAMILY_PARAMS[family]
    if set(params) != set(want):
        f.error("parameters", f"{family} takes exactly {', '.join(want)}; got {', '.join(params) or 'none'}")
        return None
    cls = {"gaussian": laws.Gaussian, "two-point": laws.TwoPoint,
           "uniform": laws.UniformInterval}[family]
    try:
        return laws.IidBranch(count, cls(**params))
    except LawError as exc:
        f.error("parameters", str(exc))
        return None


_SIM_KEYS = {"n": "measure_n", "barrier": "barrier", "eps_record": "eps_record",
             "kappa": "kappa", "max_generation": "max_generation", "max_pop": "max_pop"}


def _build_sim(f, seed):
    kw = {"seed": seed}
    for key, name in _SIM_KEYS.items():
        conv = float if key in ("barrier", "eps_record", "kappa") else _int
        value = f.get(key, conv)
        if value is not None:
            kw[name] = value
    # field-level checks mirror SimConfig's own validation
    checks = {
        "barrier": (lambda v: v > 0 and math.isfinite(v), "must be a finite number > 0"),
        "eps_record": (lambda v: 0 < v < 1, "must lie in (0, 1)"),
        "kappa": (lambda v: v > 0 and math.isfinite(v), "must be a finite number > 0"),
        "measure_n": (lambda v: v >= 1, "must be >= 1"),
        "max_pop": (lambda v: v >= 1, "must be >= 1"),
    }
    bad = False
    for key, name in _SIM_KEYS.items():
        if name in kw and name in checks and not checks[name][0](kw[name]):
            f.error(key, f"{checks[name][1]}, got {kw[name]!r}")
            bad = True
    if bad:
        return None
    try:
        return SimConfig(**kw)
    except ValueError as exc:
        f.error("max_generation", str(exc))
        return None


def _build_stats(f):
    d = StatsConfig()
    window = f.get("window", _floats, d.window)
    if len(window) != 2 or not window[0] < window[1]:
        f.error("window", "expected 'x_lo, x_hi' with x_lo < x_hi")
        window = d.window
    cfg = StatsConfig(
        window=window,
        bootstrap=f.get("bootstrap", _int, d.bootstrap),
        min_tail=f.get("min_tail", _int, d.min_tail),
        pool_size=f.get("pool_size", _int, d.pool_size),
        points=f.get("points", _ints, d.points),
        alpha=f.get("alpha", float, d.alpha),
    )
    if cfg.bootstrap < 0:
        f.error("bootstrap", "must be >= 0")
    if cfg.min_tail < 1:
        f.error("min_tail", "must be >= 1")
    if cfg.pool_size < 0:
        f.error("pool_size", "must be >= 0")
    if any(p < 1 for p in cfg.points):
        f.error("points", "measure points must be >= 1")
    if not 0 < cfg.alpha < 1:
        f.error("alpha", "must lie in (0, 1)")
    return cfg


def parse_config(text):
    """Parse and validate a configuration document.

    Raises :class:`ConfigError` carrying every field-level problem found.
    """
    parser = configparser.ConfigParser(interpolation=None, strict=True,
                                       empty_lines_in_values=False,
                                       inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        prefix = f"line {line}: " if line else ""
        raise ConfigError([f"{prefix}{exc.message if hasattr(exc, 'message') else exc}"]) from None

    lines = _line_index(text)
    problems = []
    for section in parser.sections():
        if section not in SCHEMA:
            line = lines.get((section, None))
            problems.append(f"line {line}: unknown section [{section}]")
            continue
        for key in parser[section]:
            if key not in SCHEMA[section]:
                line = lines.get((section, key))
                problems.append(f"line {line}: [{section}] {key}: unknown key")
    for section in ("experiment", "law"):
        if not parser.has_section(section):
            problems.append(f"missing required section [{section}]")

    exp = _Fields(parser, "experiment", lines, problems)
    kind = exp.get("kind", str.lower, required=parser.has_section("experiment"))
    if kind is not None and kind not in KINDS:
        exp.error("kind", f"unknown kind {kind!r}; expected one of {', '.join(KINDS)}")
    replicas = exp.get("replicas", _int, 1)
    workers = exp.get("workers", _int, 1)
    seed = exp.get("seed", _int, 0)
    out = exp.get("out", str, ".")
    if replicas < 1:
        exp.error("replicas", f"must be >= 1, got {replicas}")
    if workers < 1:
        exp.error("workers", f"must be >= 1, got {workers}")
    if not 0 <= seed < 2**64:
        exp.error("seed", "must be a 64-bit unsigned integer")

    law = _build_law(_Fields(parser, "law", lines, problems)) if parser.has_section("law") else None
    sim = _build_sim(_Fields(parser, "sim", lines, problems), seed)
    st = _build_stats(_Fields(parser, "stats", lines, problems))
    if kind == "diagnose" and not st.points:
        problems.append("[stats] points: required for kind = diagnose")

    if problems:
        raise ConfigError(problems)
    source = {s: dict(parser[s]) for s in parser.sections()}
    return ExperimentConfig(kind, law, sim, st, replicas, workers, out, source)


def default_config(kind):
    """Canonical law with every default, for runs driven purely by flags."""
    return ExperimentConfig(kind, laws.canonical_law())
