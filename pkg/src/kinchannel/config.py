"""Run configuration, tolerances, and the expansion parameter ladder.

The parameter record distinguishes two tiers of constraints:

* structural constraints that every run must satisfy (otherwise the
  construction is ill-posed), and
* the large-parameter regime required by the uniform remainder estimate,
  which desk-scale runs deliberately stay below.  Those are enforced only
  when a remainder exponent ``k0`` is supplied (declaring that intent);
  otherwise they are recorded as informational flags.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration; maps to CLI exit code 3."""


@dataclass(frozen=True)
class Tolerances:
    """Central numerical tolerance record (spec'd defaults)."""

    quadrature: float = 1e-8          # exact-identity checks in velocity space
    linverse: float = 1e-10           # CG residual for the microscopic inverse
    projection: float = 1e-10         # idempotence / orthogonality slack
    solver: float = 1e-8              # PDE solve residual checks
    compatibility: float = 1e-6       # cross-module boundary/trace identities
    decay_tail: float = 1e-8          # half-space far-field truncation


@dataclass(frozen=True)
class ExpansionParameters:
    """Orders and regularity indices of the multi-scale expansion.

    ``n`` sets the scaling (Knudsen number eps^n, Mach/Strouhal eps^{n-2}),
    ``nmax`` is the truncation order, ``taylor_order`` the wall Taylor
    depth of interior fields, and ``zeta1`` the first Knudsen decay rate
    (subsequent rates halve).
    """

    n: int = 3
    nmax: int = 1
    taylor_order: int = 3
    k0: int | None = None
    zeta1: float = 1.0
    weight_exponent: float = 6.0      # (1+y)^l weighted-norm exponent for layer diagnostics

    def zeta(self, k: int) -> float:
        """Decay-rate target of the k-th half-space problem (halving ladder)."""
        return self.zeta1 * 0.5 ** (k - 1)

    def structural_violations(self) -> list[str]:
        out = []
        if self.n < 3:
            out.append("n >= 3 violated")
        if self.nmax < 1:
            out.append("N >= 1 violated")
        if self.taylor_order < 1:
            out.append("b >= 1 violated")
        if self.zeta1 <= 0:
            out.append("zeta_1 > 0 violated")
        if self.k0 is not None and self.k0 < 1:
            out.append("k0 >= 1 violated")
        return out

    def theorem_scale_violations(self) -> list[str]:
        """Hypotheses of the uniform remainder bound, checked against k0."""
        if self.k0 is None:
            return []
        out = []
        if not self.k0 > 3 * self.n - 2:
            out.append(f"k0 > 3n-2 violated (k0={self.k0}, 3n-2={3 * self.n - 2})")
        if not self.nmax >= 2 * self.n + self.k0 - 3:
            out.append(f"N >= 2n+k0-3 violated (N={self.nmax}, "
                       f"2n+k0-3={2 * self.n + self.k0 - 3})")
        if not self.taylor_order >= self.n + self.k0 - 2.5:
            out.append(f"b >= n+k0-5/2 violated (b={self.taylor_order}, "
                       f"n+k0-5/2={self.n + self.k0 - 2.5})")
        return out

    def regularity_ladder(self) -> dict:
        """A concrete index ladder satisfying the inductive inequalities.

        The construction needs s_i > sbar_i > shat_i decreasing with gaps
        (2, 6, 2 per level) and layer weights l_j^i >= 2 l_j^{i+1} + 18 + 2b
        with l_j^N >= 2b + 6.  These are bookkeeping for the estimates, not
        inputs to the solvers; we emit a valid assignment for the record.
        """
        N, b = self.nmax, self.taylor_order
        shat = [0] * (N + 1)
        sbar = [0] * (N + 1)
        s = [0] * (N + 1)
        shat[N] = 3
        sbar[N] = max(2 * b + 4 + shat[N], shat[N] + 1)
        s[N] = sbar[N] + 1
        for i in range(N - 1, 0, -1):
            shat[i] = max(shat[i + 1] + 2, 2 * (s[i + 1] + 2))
            sbar[i] = max(shat[i] + 1, sbar[i + 1] + 6, 2 * shat[i + 1] + 4 + 2 * b,
                          2 * (s[i + 1] + 2))
            s[i] = max(sbar[i] + 1, s[i + 1] + 2, sbar[i + 1] + 8 + b)
        lad = {"s": s[1:], "sbar": sbar[1:], "shat": shat[1:], "s0": s[1] + 2 if N else 5}
        lN = 2 * b + 6
        ells = [lN]
        for _ in range(N - 1):
            ells.append(2 * ells[-1] + 18 + 2 * b)
        lad["lbar"] = ells[::-1]
        lad["zeta"] = [self.zeta(k) for k in range(1, N + 1)]
        return lad

    def validate(self, theorem_scale: bool | None = None):
        bad = self.structural_violations()
        if bad:
            raise ConfigError("; ".join(bad))
        thm = self.theorem_scale_violations()
        if thm and (theorem_scale or self.k0 is not None):
            raise ConfigError("; ".join(thm))


_DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "seed": 0,
    "mode": "hard-sphere",            # or "bgk"
    "expansion": {"n": 3, "nmax": 1, "taylor_order": 3, "k0": None,
                  "zeta1": 1.0, "weight_exponent": 6.0},
    "velocity": {"order": 24},
    "collision": {"degree": 5, "preset": "default"},
    "spatial": {"modes": [16, 16], "cheb": 33},
    "time": {"horizon": 0.25, "cfl": 0.5},
    "layer": {"ymax": 40.0, "ny": 128, "stretch": 3.0},
    "knudsen": {"order": 8, "neta": 160, "eta_max": None},
    "initial_data": {"preset": "shear", "amplitude": 0.5},
    "scan": {"epsilons": [0.2, 0.1, 0.05, 0.025], "time_samples": 3},
    "output": "out",
}


def _merge(base, override, path=""):
    out = {}
    for key, val in base.items():
        if key in override:
            ov = override[key]
            if isinstance(val, dict):
                if not isinstance(ov, dict):
                    raise ConfigError(f"config key '{path}{key}' must be a table")
                out[key] = _merge(val, ov, path + key + ".")
            else:
                out[key] = ov
        else:
            out[key] = val
    unknown = set(override) - set(base)
    if unknown:
        raise ConfigError(f"unknown config key(s): "
                          + ", ".join(sorted(path + k for k in unknown)))
    return out


@dataclass
class RunConfig:
    raw: dict = field(default_factory=lambda: json.loads(json.dumps(_DEFAULTS)))
    tolerances: Tolerances = field(default_factory=Tolerances)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if "schema_version" in data and data["schema_version"] != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {data['schema_version']}")
        merged = _merge(_DEFAULTS, data)
        cfg = cls(raw=merged)
        cfg.expansion_parameters().validate()
        if merged["mode"] not in ("hard-sphere", "bgk"):
            raise ConfigError(f"unknown mode '{merged['mode']}'")
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config parse error: {exc}") from exc
        return cls.from_dict(data)

    def expansion_parameters(self) -> ExpansionParameters:
        e = self.raw["expansion"]
        return ExpansionParameters(n=e["n"], nmax=e["nmax"],
                                   taylor_order=e["taylor_order"], k0=e["k0"],
                                   zeta1=e["zeta1"],
                                   weight_exponent=e["weight_exponent"])

    def to_json(self) -> str:
        return json.dumps(self.raw, indent=2, sort_keys=True)

    def describe(self) -> dict:
        params = self.expansion_parameters()
        return {
            "config": self.raw,
            "theorem_scale_gaps": params.theorem_scale_violations()
            if params.k0 is None else [],
            "regularity_ladder": params.regularity_ladder(),
            "tolerances": asdict(self.tolerances),
        }
