"""Run configuration: strict sectioned text format, parsing, canonical
serialization and hashing.

The format is line-based::

    [section]
    key = value tokens   # trailing comments allowed

Unknown sections or keys, duplicate keys, malformed values and range
violations are all hard errors carrying the file line number. Every
parsed configuration serializes back to a canonical text with all
defaults made explicit; parse(serialize(cfg)) reproduces cfg exactly.

The configuration hash used in output headers covers the canonical
serialization of every section except [run]: it identifies the physical
problem and its numerical treatment, not the run mode or bookkeeping, so
runs that must produce identical numbers carry identical hashes.
"""

import hashlib

from crom.adaptivity import AdaptivityConfig, FEATURES
from crom.materials import PhaseMaterial
from crom.rve import GeneratorSpec, GENERATOR_KINDS
from crom.solver import FractureCriterion, LoadingPath, SolverConfig
from crom.tensors import SQRT2

MODES = ("sca", "asca", "oracle", "cit-bench")
COMPONENTS = {"xx": 0, "yy": 1, "xy": 2}


class ConfigError(ValueError):
    """Configuration diagnostic with file position."""

    def __init__(self, path, line, message):
        self.path = path
        self.line = line
        super().__init__("%s:%s: %s" % (path, line if line else "?",
                                        message))


class _Section:
    def __init__(self, name, line):
        self.name = name
        self.line = line
        self.pairs = {}      # key -> (value string, line)

    def take(self, key, default=None):
        if key in self.pairs:
            return self.pairs.pop(key)
        return (default, self.line)


def _strip_comment(line):
    cut = line.find("#")
    return line if cut < 0 else line[:cut]


def _scan(path, text):
    """Tokenize into sections; duplicate keys and stray text are errors."""
    sections = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if not name:
                raise ConfigError(path, lineno, "empty section name")
            if name in sections:
                raise ConfigError(path, lineno,
                                  "duplicate section [%s]" % name)
            current = _Section(name, lineno)
            sections[name] = current
            continue
        if current is None:
            raise ConfigError(path, lineno,
                              "content before the first section")
        if "=" not in line:
            raise ConfigError(path, lineno, "expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(path, lineno, "missing key before '='")
        if key in current.pairs:
            raise ConfigError(path, lineno, "duplicate key %r in [%s]"
                              % (key, current.name))
        current.pairs[key] = (value, lineno)
    return sections


def _want_int(path, key, value, line):
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ConfigError(path, line, "%s: expected an integer, got %r"
                          % (key, value))


def _want_float(path, key, value, line):
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(path, line, "%s: expected a number, got %r"
                          % (key, value))


def _want_bool(path, key, value, line):
    if value in ("true", "false"):
        return value == "true"
    raise ConfigError(path, line, "%s: expected true or false, got %r"
                      % (key, value))


def _reject_leftovers(path, section):
    if section.pairs:
        key, (_, line) = next(iter(section.pairs.items()))
        raise ConfigError(path, line, "unknown key %r in section [%s]"
                          % (key, section.name))


def _build_checked(path, section, builder, kwargs):
    """Run a validating constructor, mapping range errors back to the
    offending key's line when the message names it."""
    try:
        return builder(**kwargs)
    except ValueError as exc:
        line = section.line
        for key, (_, key_line) in section.taken.items():
            if key in str(exc) or key.replace("-", "_") in str(exc):
                line = key_line
                break
        raise ConfigError(path, line, str(exc))


def _rve_from_section(path, sec):
    """[rve] section -> (file path or None, GeneratorSpec or None)."""
    file_value, _ = sec.take("file")
    kind_value, kind_line = sec.take("kind")
    if file_value is not None and kind_value is not None:
        raise ConfigError(path, kind_line,
                          "[rve] takes file or kind, not both")
    if file_value is not None:
        _reject_leftovers(path, sec)
        return file_value, None
    if kind_value is None:
        raise ConfigError(path, sec.line, "[rve] needs file or kind")
    if kind_value not in GENERATOR_KINDS:
        raise ConfigError(path, kind_line,
                          "kind: expected one of %s, got %r"
                          % ("|".join(GENERATOR_KINDS), kind_value))
    value, line = sec.take("dims")
    if value is None:
        raise ConfigError(path, sec.line, "[rve] generator needs dims")
    toks = value.split()
    if len(toks) != 2:
        raise ConfigError(path, line, "dims: expected two integers")
    dims = tuple(_want_int(path, "dims", t, line) for t in toks)
    value, line = sec.take("lengths")
    lengths = None
    if value is not None:
        toks = value.split()
        if len(toks) != 2:
            raise ConfigError(path, line, "lengths: expected two numbers")
        lengths = tuple(_want_float(path, "lengths", t, line)
                        for t in toks)
    kwargs = {"kind": kind_value, "dims": dims, "lengths": lengths}
    value, line = sec.take("volume_fraction")
    if value is not None:
        kwargs["volume_fraction"] = _want_float(
            path, "volume_fraction", value, line)
    value, line = sec.take("radius")
    if value is not None:
        kwargs["radius"] = _want_float(path, "radius", value, line)
    value, line = sec.take("count")
    if value is not None:
        kwargs["count"] = _want_int(path, "count", value, line)
    value, line = sec.take("seed")
    seed_value = 0 if value is None else _want_int(path, "seed", value,
                                                   line)
    kwargs["seed"] = seed_value
    _reject_leftovers(path, sec)
    try:
        return None, GeneratorSpec(**kwargs)
    except ValueError as exc:
        raise ConfigError(path, sec.line, str(exc))


def parse_generator(path, text=None):
    """Parse a file that carries (at least) an [rve] section.

    Used by RVE generation outside full runs; other sections present in
    the file are ignored. Returns (file path or None, GeneratorSpec or
    None).
    """
    if text is None:
        with open(path) as handle:
            text = handle.read()
    sections = _scan(path, text)
    if "rve" not in sections:
        raise ConfigError(path, 0, "missing required section [rve]")
    return _rve_from_section(path, sections["rve"])


class RunConfig:
    """Everything one run needs, with mode-dependent optional parts."""

    def __init__(self):
        self.mode = None
        self.output = "crom-out"
        self.seed = 0
        self.checkpoints = ()
        self.rve_file = None
        self.generator = None
        self.materials = {}
        self.adaptive_phases = frozenset()
        self.clusters = {}
        self.cluster_n_init = 10
        self.mini_batch = 0
        self.n_increments = None
        self.strain_targets = {}
        self.stress_targets = {}
        self.solver = SolverConfig()
        self.fracture = None
        self.adaptivity = None
        self.rewind = False
        self.rewind_limit = 1
        self.oracle_tol = 1e-8
        self.benchmark = None

    # -- derived builders --------------------------------------------------
    def loading_path(self):
        return LoadingPath.linear_ramp(self.n_increments,
                                       strain_totals=self.strain_targets,
                                       stress_totals=self.stress_targets)

    def config_hash(self):
        text = serialize_config(self, physics_only=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def __eq__(self, other):
        return isinstance(other, RunConfig) and \
            serialize_config(self) == serialize_config(other)

    def __hash__(self):
        return hash(serialize_config(self))


def parse_config(path, text=None):
    """Parse and validate a run configuration file."""
    if text is None:
        with open(path) as handle:
            text = handle.read()
    sections = _scan(path, text)
    cfg = RunConfig()

    known = {"run", "rve", "clustering", "loading", "solver", "fracture",
             "adaptivity", "oracle", "benchmark"}
    for name, section in sections.items():
        if name not in known and not name.startswith("material."):
            raise ConfigError(path, section.line,
                              "unknown section [%s]" % name)

    # ----- [run] -----
    if "run" not in sections:
        raise ConfigError(path, 0, "missing required section [run]")
    sec = sections["run"]
    value, line = sec.take("mode")
    if value is None:
        raise ConfigError(path, sec.line, "[run] needs mode")
    if value not in MODES:
        raise ConfigError(path, line, "mode: expected one of %s, got %r"
                          % ("|".join(MODES), value))
    cfg.mode = value
    value, line = sec.take("output")
    if value is not None:
        cfg.output = value
    value, line = sec.take("seed")
    if value is not None:
        cfg.seed = _want_int(path, "seed", value, line)
    value, line = sec.take("checkpoints")
    if value is not None:
        cfg.checkpoints = tuple(_want_int(path, "checkpoints", t, line)
                                for t in value.split())
        if any(c < 1 for c in cfg.checkpoints):
            raise ConfigError(path, line,
                              "checkpoints: increment indices are 1-based")
    _reject_leftovers(path, sec)

    # ----- [rve] -----
    if cfg.mode != "cit-bench" or "rve" in sections:
        if "rve" not in sections:
            raise ConfigError(path, 0, "missing required section [rve]")
        cfg.rve_file, cfg.generator = _rve_from_section(path,
                                                        sections["rve"])

    # ----- [material.N] -----
    adaptive = set()
    for name in sorted(n for n in sections if n.startswith("material.")):
        sec = sections[name]
        suffix = name.split(".", 1)[1]
        try:
            phase = int(suffix)
        except ValueError:
            raise ConfigError(path, sec.line,
                              "material section needs an integer phase "
                              "id, got %r" % suffix)
        value, line = sec.take("model")
        if value is None:
            raise ConfigError(path, sec.line, "[%s] needs model" % name)
        if value not in ("elastic", "von_mises"):
            raise ConfigError(path, line,
                              "model: expected elastic or von_mises, "
                              "got %r" % value)
        kwargs = {"kind": value}
        for key, cast in (("young", _want_float),
                          ("poisson", _want_float)):
            value, line = sec.take(key)
            if value is None:
                raise ConfigError(path, sec.line,
                                  "[%s] needs %s" % (name, key))
            kwargs[key] = cast(path, key, value, line)
        mapping = (("yield_stress", "sigma_y0"),
                   ("hardening_coef", "hardening_coef"),
                   ("hardening_exp", "hardening_exp"))
        for key, target in mapping:
            value, line = sec.take(key)
            if value is not None:
                kwargs[target] = _want_float(path, key, value, line)
        value, line = sec.take("adaptive")
        if value is not None and _want_bool(path, "adaptive", value, line):
            adaptive.add(phase)
        _reject_leftovers(path, sec)
        try:
            cfg.materials[phase] = PhaseMaterial(**kwargs)
        except ValueError as exc:
            raise ConfigError(path, sec.line, str(exc))
    cfg.adaptive_phases = frozenset(adaptive)
    if cfg.mode != "cit-bench" and not cfg.materials:
        raise ConfigError(path, 0, "no [material.N] sections")

    # ----- [clustering] -----
    if "clustering" in sections:
        sec = sections["clustering"]
        value, line = sec.take("clusters")
        if value is not None:
            for token in value.split():
                if ":" not in token:
                    raise ConfigError(path, line,
                                      "clusters: expected phase:count "
                                      "pairs, got %r" % token)
                phase, _, count = token.partition(":")
                cfg.clusters[_want_int(path, "clusters", phase, line)] = \
                    _want_int(path, "clusters", count, line)
        value, line = sec.take("n_init")
        if value is not None:
            cfg.cluster_n_init = _want_int(path, "n_init", value, line)
            if cfg.cluster_n_init < 1:
                raise ConfigError(path, line, "n_init must be >= 1")
        value, line = sec.take("mini_batch")
        if value is not None:
            cfg.mini_batch = _want_int(path, "mini_batch", value, line)
            if cfg.mini_batch < 0:
                raise ConfigError(path, line, "mini_batch must be >= 0")
        _reject_leftovers(path, sec)
    if cfg.mode in ("sca", "asca") and not cfg.clusters:
        raise ConfigError(path, 0,
                          "mode %s needs [clustering] clusters" % cfg.mode)

    # ----- [loading] -----
    if cfg.mode != "cit-bench":
        if "loading" not in sections:
            raise ConfigError(path, 0, "missing required section "
                                       "[loading]")
        sec = sections["loading"]
        value, line = sec.take("increments")
        if value is None:
            raise ConfigError(path, sec.line, "[loading] needs increments")
        cfg.n_increments = _want_int(path, "increments", value, line)
        if cfg.n_increments < 1:
            raise ConfigError(path, line, "increments must be >= 1")
        for label, comp in COMPONENTS.items():
            shear = SQRT2 if comp == 2 else 1.0
            value, line = sec.take("strain_" + label)
            if value is not None:
                cfg.strain_targets[comp] = shear * _want_float(
                    path, "strain_" + label, value, line)
            value, line = sec.take("stress_" + label)
            if value is not None:
                if comp in cfg.strain_targets:
                    raise ConfigError(path, line,
                                      "component %s has both strain and "
                                      "stress targets" % label)
                cfg.stress_targets[comp] = shear * _want_float(
                    path, "stress_" + label, value, line)
        _reject_leftovers(path, sec)

    # ----- [solver] -----
    if "solver" in sections:
        sec = sections["solver"]
        kwargs = {}
        for key, cast in (("newton_tol", _want_float),
                          ("newton_max_iter", _want_int),
                          ("sc_tol", _want_float),
                          ("sc_max_iter", _want_int),
                          ("max_cuts", _want_int),
                          ("ref_lambda", _want_float),
                          ("ref_mu", _want_float)):
            value, line = sec.take(key)
            if value is not None:
                kwargs[key] = cast(path, key, value, line)
        value, line = sec.take("self_consistent")
        if value is not None:
            kwargs["self_consistent"] = _want_bool(
                path, "self_consistent", value, line)
        _reject_leftovers(path, sec)
        try:
            cfg.solver = SolverConfig(**kwargs)
        except ValueError as exc:
            raise ConfigError(path, sec.line, str(exc))

    # ----- [fracture] -----
    if "fracture" in sections:
        sec = sections["fracture"]
        kwargs = {}
        value, line = sec.take("phase")
        if value is None:
            raise ConfigError(path, sec.line, "[fracture] needs phase")
        kwargs["phase"] = _want_int(path, "phase", value, line)
        value, line = sec.take("volume_fraction")
        if value is None:
            raise ConfigError(path, sec.line,
                              "[fracture] needs volume_fraction")
        kwargs["volume_fraction_threshold"] = _want_float(
            path, "volume_fraction", value, line)
        value, line = sec.take("acc_p")
        if value is None:
            raise ConfigError(path, sec.line, "[fracture] needs acc_p")
        kwargs["acc_p_threshold"] = _want_float(path, "acc_p", value, line)
        _reject_leftovers(path, sec)
        try:
            cfg.fracture = FractureCriterion(**kwargs)
        except ValueError as exc:
            raise ConfigError(path, sec.line, str(exc))

    # ----- [adaptivity] -----
    if "adaptivity" in sections:
        sec = sections["adaptivity"]
        sec.taken = {}
        kwargs = {"adaptive_phases": cfg.adaptive_phases}
        value, line = sec.take("feature")
        if value is not None:
            if value not in FEATURES:
                raise ConfigError(path, line,
                                  "feature: expected one of %s, got %r"
                                  % ("|".join(FEATURES), value))
            kwargs["feature"] = value
        for key, cast in (("trigger_ratio", _want_float),
                          ("child_volume_fraction", _want_float),
                          ("split_factor", _want_float),
                          ("split_amplitude", _want_float),
                          ("magnitude_exponent", _want_float),
                          ("theta_low", _want_float),
                          ("frequency", _want_int),
                          ("max_consecutive_steps", _want_int),
                          ("cluster_budget", _want_int),
                          ("min_feature_value", _want_float),
                          ("max_level", _want_int),
                          ("min_voxels_per_cluster", _want_int),
                          ("scan_frequency", _want_int)):
            value, line = sec.take(key)
            if value is not None:
                kwargs[key] = cast(path, key, value, line)
                sec.taken[key] = (value, line)
        value, line = sec.take("max_level_gap")
        if value is not None and value != "none":
            kwargs["max_level_gap"] = _want_int(path, "max_level_gap",
                                                value, line)
            sec.taken["max_level_gap"] = (value, line)
        value, line = sec.take("repeat_increment")
        if value is not None:
            kwargs["repeat_increment"] = _want_bool(
                path, "repeat_increment", value, line)
        value, line = sec.take("rewind")
        if value is not None:
            cfg.rewind = _want_bool(path, "rewind", value, line)
        value, line = sec.take("rewind_limit")
        if value is not None:
            cfg.rewind_limit = _want_int(path, "rewind_limit", value, line)
            if cfg.rewind_limit < 0:
                raise ConfigError(path, line, "rewind_limit must be >= 0")
        _reject_leftovers(path, sec)
        cfg.adaptivity = _build_checked(path, sec, AdaptivityConfig,
                                        kwargs)
    if cfg.mode == "asca" and cfg.adaptivity is None:
        raise ConfigError(path, 0,
                          "mode asca needs an [adaptivity] section")

    # ----- [oracle] -----
    if "oracle" in sections:
        sec = sections["oracle"]
        value, line = sec.take("tol")
        if value is not None:
            cfg.oracle_tol = _want_float(path, "tol", value, line)
            if cfg.oracle_tol <= 0.0:
                raise ConfigError(path, line, "tol must be positive")
        _reject_leftovers(path, sec)

    # ----- [benchmark] -----
    if "benchmark" in sections:
        sec = sections["benchmark"]
        bench = {"n_init": (16, 32, 64), "alpha": 0.75,
                 "beta": (0.25, 1.0), "dims": (64, 64), "repeats": 3}
        value, line = sec.take("n_init")
        if value is not None:
            bench["n_init"] = tuple(_want_int(path, "n_init", t, line)
                                    for t in value.split())
        value, line = sec.take("alpha")
        if value is not None:
            bench["alpha"] = _want_float(path, "alpha", value, line)
        value, line = sec.take("beta")
        if value is not None:
            bench["beta"] = tuple(_want_float(path, "beta", t, line)
                                  for t in value.split())
        value, line = sec.take("dims")
        if value is not None:
            toks = value.split()
            if len(toks) != 2:
                raise ConfigError(path, line, "dims: expected two integers")
            bench["dims"] = tuple(_want_int(path, "dims", t, line)
                                  for t in toks)
        value, line = sec.take("repeats")
        if value is not None:
            bench["repeats"] = _want_int(path, "repeats", value, line)
        _reject_leftovers(path, sec)
        cfg.benchmark = bench
    if cfg.mode == "cit-bench" and cfg.benchmark is None:
        cfg.benchmark = {"n_init": (16, 32, 64), "alpha": 0.75,
                         "beta": (0.25, 1.0), "dims": (64, 64),
                         "repeats": 3}
    return cfg


# =============================================================================
# Canonical serialization
# =============================================================================
def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "%.17g" % value
    return str(value)


def serialize_config(cfg, physics_only=False):
    """Canonical text form with every default explicit.

    ``physics_only`` drops the [run] section (used by the config hash).
    """
    out = []
    if not physics_only:
        out.append("[run]")
        out.append("mode = %s" % cfg.mode)
        out.append("output = %s" % cfg.output)
        out.append("seed = %d" % cfg.seed)
        if cfg.checkpoints:
            out.append("checkpoints = %s"
                       % " ".join(str(c) for c in cfg.checkpoints))
        out.append("")

    if cfg.rve_file is not None or cfg.generator is not None:
        out.append("[rve]")
        if cfg.rve_file is not None:
            out.append("file = %s" % cfg.rve_file)
        else:
            gen = cfg.generator
            out.append("kind = %s" % gen.kind)
            out.append("dims = %d %d" % gen.dims)
            out.append("lengths = %s %s" % (_fmt(gen.lengths[0]),
                                            _fmt(gen.lengths[1])))
            if gen.volume_fraction is not None:
                out.append("volume_fraction = %s"
                           % _fmt(gen.volume_fraction))
            if gen.radius is not None:
                out.append("radius = %s" % _fmt(gen.radius))
            if gen.count is not None:
                out.append("count = %d" % gen.count)
            out.append("seed = %d" % (gen.seed if gen.seed is not None
                                      else 0))
        out.append("")

    for phase in sorted(cfg.materials):
        mat = cfg.materials[phase]
        out.append("[material.%d]" % phase)
        out.append("model = %s" % mat.kind)
        out.append("young = %s" % _fmt(mat.young))
        out.append("poisson = %s" % _fmt(mat.poisson))
        if mat.kind == "von_mises":
            out.append("yield_stress = %s" % _fmt(mat.sigma_y0))
            out.append("hardening_coef = %s" % _fmt(mat.hardening_coef))
            out.append("hardening_exp = %s" % _fmt(mat.hardening_exp))
        out.append("adaptive = %s"
                   % _fmt(phase in cfg.adaptive_phases))
        out.append("")

    if cfg.clusters:
        out.append("[clustering]")
        out.append("clusters = %s" % " ".join(
            "%d:%d" % (p, cfg.clusters[p]) for p in sorted(cfg.clusters)))
        out.append("n_init = %d" % cfg.cluster_n_init)
        out.append("mini_batch = %d" % cfg.mini_batch)
        out.append("")

    if cfg.n_increments is not None:
        out.append("[loading]")
        out.append("increments = %d" % cfg.n_increments)
        for label, comp in COMPONENTS.items():
            shear = SQRT2 if comp == 2 else 1.0
            if comp in cfg.strain_targets:
                out.append("strain_%s = %s"
                           % (label, _fmt(cfg.strain_targets[comp]
                                          / shear)))
            if comp in cfg.stress_targets:
                out.append("stress_%s = %s"
                           % (label, _fmt(cfg.stress_targets[comp]
                                          / shear)))
        out.append("")

    sol = cfg.solver
    out.append("[solver]")
    out.append("newton_tol = %s" % _fmt(sol.newton_tol))
    out.append("newton_max_iter = %d" % sol.newton_max_iter)
    out.append("sc_tol = %s" % _fmt(sol.sc_tol))
    out.append("sc_max_iter = %d" % sol.sc_max_iter)
    out.append("self_consistent = %s" % _fmt(sol.self_consistent))
    out.append("max_cuts = %d" % sol.max_cuts)
    if sol.ref_lambda is not None:
        out.append("ref_lambda = %s" % _fmt(sol.ref_lambda))
    if sol.ref_mu is not None:
        out.append("ref_mu = %s" % _fmt(sol.ref_mu))
    out.append("")

    if cfg.fracture is not None:
        out.append("[fracture]")
        out.append("phase = %d" % cfg.fracture.phase)
        out.append("volume_fraction = %s"
                   % _fmt(cfg.fracture.volume_fraction_threshold))
        out.append("acc_p = %s" % _fmt(cfg.fracture.acc_p_threshold))
        out.append("")

    if cfg.adaptivity is not None:
        ada = cfg.adaptivity
        out.append("[adaptivity]")
        out.append("feature = %s" % ada.feature)
        out.append("trigger_ratio = %s" % _fmt(ada.trigger_ratio))
        out.append("child_volume_fraction = %s"
                   % _fmt(ada.child_volume_fraction))
        out.append("split_factor = %s" % _fmt(ada.split_factor))
        out.append("split_amplitude = %s" % _fmt(ada.split_amplitude))
        out.append("magnitude_exponent = %s"
                   % _fmt(ada.magnitude_exponent))
        out.append("theta_low = %s" % _fmt(ada.theta_low))
        out.append("frequency = %d" % ada.frequency)
        out.append("max_consecutive_steps = %d"
                   % ada.max_consecutive_steps)
        out.append("cluster_budget = %d" % ada.cluster_budget)
        out.append("min_feature_value = %s" % _fmt(ada.min_feature_value))
        out.append("max_level = %d" % ada.max_level)
        out.append("max_level_gap = %s"
                   % ("none" if ada.max_level_gap is None
                      else "%d" % ada.max_level_gap))
        out.append("min_voxels_per_cluster = %d"
                   % ada.min_voxels_per_cluster)
        out.append("scan_frequency = %d" % ada.scan_frequency)
        out.append("repeat_increment = %s" % _fmt(ada.repeat_increment))
        out.append("rewind = %s" % _fmt(cfg.rewind))
        out.append("rewind_limit = %d" % cfg.rewind_limit)
        out.append("")

    out.append("[oracle]")
    out.append("tol = %s" % _fmt(cfg.oracle_tol))
    out.append("")

    if cfg.benchmark is not None:
        b = cfg.benchmark
        out.append("[benchmark]")
        out.append("n_init = %s" % " ".join(str(n) for n in b["n_init"]))
        out.append("alpha = %s" % _fmt(b["alpha"]))
        out.append("beta = %s" % " ".join(_fmt(x) for x in b["beta"]))
        out.append("dims = %d %d" % tuple(b["dims"]))
        out.append("repeats = %d" % b["repeats"])
        out.append("")
    return "\n".join(out)
