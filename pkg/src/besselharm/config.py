"""Campaign configuration: a versioned YAML file with defaults for every field.

Unknown keys are rejected at every level so that typos cannot silently fall
back to defaults.  ``dump(parse(text))`` reproduces the resolved campaign.
"""

from dataclasses import asdict, dataclass, field, fields
import yaml

from .errors import UsageError

CONFIG_VERSION = 1

STANDARD_ESTIMATES = tuple(f"{fam}.{kind}" for fam in ("heat", "poisson", "heat_g", "poisson_g", "laplace", "riesz")
                           for kind in ("gr", "sm1", "sm2", "grad")
                           if kind != "grad" or fam in ("laplace", "riesz"))

SUITES = ("phi_bound", "theta", "involution", "self_reciprocity", "three_route", "chapman_kolmogorov", "eigenfunction",
          "poisson_closed", "g_constant", "multiplier", "limits", "duality", "bridge", "estexp",
          "l2.multiplier", "l2.g_function", "l2.maximal", "l2.riesz")
KNOWN_IDS = STANDARD_ESTIMATES + SUITES
TOLERANCE_KEYS = ("involution", "self_reciprocity", "three_route", "chapman_kolmogorov", "eigenfunction",
                  "poisson_closed", "g_constant", "multiplier_identity", "multiplier_imaginary_power",
                  "limits.t_min", "limits.t_max", "duality")


class ConfigError(UsageError):
    """The campaign file cannot be parsed or fails validation."""


@dataclass
class GridSpec:
    order: int = 0          # 0 selects the default for the dimension
    zmax: float = 12.0


@dataclass
class TimeRuleSpec:
    t_min: float = 1e-4
    t_max: float = 1e4
    count: int = 200


@dataclass
class SamplerSpec:
    seed: int = 0
    count: int = 10000
    lo: float = 1e-3
    hi: float = 1e3
    rho_lo: float = 1e-2
    theta_count: int = 100000


@dataclass
class OperatorSpec:
    heat_g: dict = field(default_factory=lambda: {"m": None, "k": 1, "r": 2})
    poisson_g: dict = field(default_factory=lambda: {"m": None, "k": 1, "r": 2})
    laplace: dict = field(default_factory=lambda: {"psi": "exponential", "kind": "W", "gamma": 0.5})
    riesz: dict = field(default_factory=lambda: {"m": None})


@dataclass
class EvalSpec:
    target: str = "kernel"          # kernel, transform or operator
    kernel: str = "heat"            # heat or poisson
    operator: str = "semigroup"     # semigroup, maximal, g_function, multiplier, riesz
    which: str = "W"
    t: float = 1.0
    function: str = "gaussian"      # gaussian or band_limited
    points: list = field(default_factory=list)


@dataclass
class OutputSpec:
    dir: str = "out"


@dataclass
class CampaignConfig:
    version: int = CONFIG_VERSION
    dimension: int = 1
    lam: list = field(default_factory=lambda: [0.5])
    grid: GridSpec = field(default_factory=GridSpec)
    time_rule: TimeRuleSpec = field(default_factory=TimeRuleSpec)
    sampler: SamplerSpec = field(default_factory=SamplerSpec)
    operators: OperatorSpec = field(default_factory=OperatorSpec)
    estimates: list = field(default_factory=lambda: list(STANDARD_ESTIMATES))
    eval: EvalSpec = field(default_factory=EvalSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    tolerances: dict = field(default_factory=dict)
    threads: int = 1

    def validate(self):
        if self.version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {self.version}")
        if not isinstance(self.dimension, int) or self.dimension < 1:
            raise ConfigError("dimension must be a positive integer")
        if len(self.lam) != self.dimension:
            raise ConfigError("lambda needs one entry per dimension")
        if any(not isinstance(v, (int, float)) or v < 0 for v in self.lam):
            raise ConfigError("every lambda_i must be a nonnegative number")
        tr = self.time_rule
        if not (0 < tr.t_min < tr.t_max) or tr.count < 2:
            raise ConfigError("time_rule needs 0 < t_min < t_max and count >= 2")
        if self.sampler.count < 1 or not (0 < self.sampler.lo < self.sampler.hi):
            raise ConfigError("sampler needs count >= 1 and 0 < lo < hi")
        if self.grid.zmax <= 0 or self.grid.order < 0:
            raise ConfigError("grid needs zmax > 0 and order >= 0")
        ev = self.eval
        if ev.target not in ("kernel", "transform", "operator"):
            raise ConfigError(f"unknown eval target {ev.target}")
        if ev.kernel not in ("heat", "poisson") or ev.which not in ("W", "P"):
            raise ConfigError("eval.kernel must be heat or poisson and eval.which W or P")
        if ev.operator not in ("semigroup", "maximal", "g_function", "multiplier", "riesz"):
            raise ConfigError(f"unknown eval operator {ev.operator}")
        if ev.function not in ("gaussian", "band_limited"):
            raise ConfigError(f"unknown eval function {ev.function}")
        if not ev.t > 0:
            raise ConfigError("eval.t must be positive")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        for key, allowed in (("heat_g", {"m", "k", "r"}), ("poisson_g", {"m", "k", "r"}),
                             ("laplace", {"psi", "kind", "gamma"}), ("riesz", {"m"})):
            extra = set(getattr(self.operators, key)) - allowed
            if extra:
                raise ConfigError(f"unknown keys in operators.{key}: {sorted(extra)}")
        unknown = [e for e in self.estimates if e not in KNOWN_IDS]
        if unknown:
            raise ConfigError(f"unknown estimate ids: {unknown}")
        bad = sorted(set(self.tolerances) - set(TOLERANCE_KEYS))
        if bad:
            raise ConfigError(f"unknown tolerance keys: {bad}")
        if any(not isinstance(v, (int, float)) or not v > 0 for v in self.tolerances.values()):
            raise ConfigError("tolerances must be positive numbers")
        if self.operators.laplace.get("psi") not in ("exponential", "constant", "imaginary_power"):
            raise ConfigError("operators.laplace.psi must be exponential, constant or imaginary_power")
        return self

    def to_dict(self):
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    def dump(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=True)


def _build(cls, data, path):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown keys in {path or 'config'}: {sorted(unknown)}")
    kw = {}
    for name, value in data.items():
        f = known[name]
        default = f.default_factory() if callable(f.default_factory) else f.default
        if hasattr(default, "__dataclass_fields__"):
            kw[name] = _build(type(default), value, f"{path}.{name}" if path else name)
        elif isinstance(default, dict) and isinstance(value, dict):
            merged = dict(default)
            merged.update(value)
            kw[name] = merged
        elif isinstance(default, float) and isinstance(value, (str, int)) and not isinstance(value, bool):
            # YAML 1.1 reads "1e4" (unsigned exponent) as a string
            try:
                kw[name] = float(value)
            except ValueError:
                raise ConfigError(f"{path}.{name} must be a number, got {value!r}") from None
        else:
            kw[name] = value
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def parse(text):
    """CampaignConfig from YAML text; omitted fields take their defaults."""
    try:
        data = yaml.safe_load(text) if text and text.strip() else {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    data = dict(data)
    if "lambda" in data:
        data["lam"] = data.pop("lambda")
    if "lam" in data and not isinstance(data["lam"], list):
        data["lam"] = [data["lam"]]
    if "dimension" not in data and "lam" in data:
        data["dimension"] = len(data["lam"])
    if "lam" not in data and "dimension" in data:
        data["lam"] = [0.5] * int(data["dimension"])
    cfg = _build(CampaignConfig, data, "")
    return cfg.validate()


def load(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse(text)
