from dataclasses import asdict, dataclass, fields, replace


@dataclass(frozen=True)
class Tolerances:
    """Numerical tolerances shared by geometry, engine and harness.

    Every field can be overridden from the CLI with ``--tol KEY=VAL``.
    """

    geo: float = 1e-7
    roundtrip_closed: float = 1e-9
    roundtrip_ode: float = 1e-6
    quad: float = 1e-6
    fd_step: float = 1e-5
    grad: float = 1e-4
    ineq: float = 1e-7
    ineq_fd: float = 1e-5
    cond: float = 1e-6
    inf: float = 1e-3
    christoffel_step: float = 1e-5
    ode_steps: int = 256

    def with_overrides(self, **overrides):
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise KeyError(f"unknown tolerance key(s): {', '.join(sorted(unknown))}")
        cast = {k: (int(v) if k == "ode_steps" else float(v)) for k, v in overrides.items()}
        for k, v in cast.items():
            if not v > 0:
                raise ValueError(f"tolerance {k} must be positive, got {v}")
        return replace(self, **cast)

    def as_dict(self):
        return asdict(self)


DEFAULT_TOLERANCES = Tolerances()
