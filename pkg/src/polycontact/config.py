"""Case configuration: INI files with sections, SI units.

Example::

    [case]
    id = coupled_dfm6

    [mesh]
    level = 1

    [material]
    E = 4e9
    nu = 0.2

    [solver]
    bubble = two_sided
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace

CASES = ("manufactured3d", "compression2d", "dfm6", "coupled_dfm6", "coupled_cube3d", "custom")
BUBBLES = ("one_sided", "two_sided")


class ConfigError(ValueError):
    """Validation failure; ``errors`` holds (field path, message) pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{p}: {m}" for p, m in self.errors))


@dataclass
class MeshSpec:
    generator: str = ""  # cartesian | tet | hex, or empty for the case default
    level: int = 0
    file: str = ""
    seed: int = 1
    amplitude: float = 0.2
    h: float = 0.1


@dataclass
class Material:
    E: float | None = None
    nu: float | None = None
    mu: float | None = None
    lam: float | None = None
    biot: float | None = None
    M: float | None = None
    perm: tuple | None = None
    normal_perm: float | None = None
    eta: float | None = None
    friction: float | None = None
    aperture_c: float | None = None
    porosity0: float | None = None


@dataclass
class BoundaryConditions:
    top: tuple | None = None  # imposed top displacement (m)
    ramp: float | None = None  # fraction of T over which it ramps up
    sigma: float | None = None  # compression load (Pa)
    p0: float | None = None


@dataclass
class TimeSpec:
    T: float | None = None
    steps: int | None = None


@dataclass
class SolverSpec:
    newton_tol: float = 1e-10
    eps_fs: float = 1e-5
    bubble: str = "one_sided"
    audit: bool = True


@dataclass
class CaseConfig:
    case: str = "manufactured3d"
    mesh: MeshSpec = field(default_factory=MeshSpec)
    material: Material = field(default_factory=Material)
    bc: BoundaryConditions = field(default_factory=BoundaryConditions)
    time: TimeSpec = field(default_factory=TimeSpec)
    solver: SolverSpec = field(default_factory=SolverSpec)
    output: str = "out"

    @property
    def two_sided(self):
        return self.solver.bubble == "two_sided"

    def validate(self):
        err = self.problems()
        if err:
            raise ConfigError(err)
        return self

    def problems(self):
        err = []
        if self.case not in CASES:
            err.append(("case.id", f"unknown case {self.case!r}, expected one of {', '.join(CASES)}"))
        if self.case == "custom" and not self.mesh.file:
            err.append(("mesh.file", "a custom case needs a mesh file"))
        if self.case != "custom" and self.mesh.file:
            err.append(("mesh.file", "a mesh file is only read by the custom case"))
        if self.mesh.level < 0:
            err.append(("mesh.level", "must be >= 0"))
        if self.mesh.generator and self.mesh.generator not in ("cartesian", "tet", "hex"):
            err.append(("mesh.generator", f"unknown generator {self.mesh.generator!r}"))
        mat = self.material
        if mat.E is not None and mat.E <= 0:
            err.append(("material.E", "must be > 0"))
        if mat.nu is not None and not -1 < mat.nu < 0.5:
            err.append(("material.nu", "must lie in (-1, 1/2)"))
        if (mat.mu is None) != (mat.lam is None):
            err.append(("material.mu" if mat.mu is None else "material.lam", "mu and lam must be given together"))
        if mat.E is not None and mat.mu is not None:
            err.append(("material.mu", "give either (E, nu) or (mu, lam)"))
        if mat.mu is not None and mat.mu <= 0:
            err.append(("material.mu", "must be > 0"))
        for name in ("eta", "M", "aperture_c"):
            v = getattr(mat, name)
            if v is not None and v <= 0:
                err.append((f"material.{name}", "must be > 0"))
        if mat.friction is not None and mat.friction < 0:
            err.append(("material.friction", "must be >= 0"))
        if mat.perm is not None:
            if len(mat.perm) not in (1, 2, 3) or min(mat.perm) <= 0:
                err.append(("material.perm", "1 to 3 positive diagonal entries expected"))
        if self.time.steps is not None and self.time.steps < 1:
            err.append(("time.steps", "must be >= 1"))
        if self.time.T is not None and self.time.T <= 0:
            err.append(("time.T", "must be > 0"))
        if self.solver.bubble not in BUBBLES:
            err.append(("solver.bubble", f"expected one of {', '.join(BUBBLES)}"))
        if self.solver.newton_tol <= 0:
            err.append(("solver.newton_tol", "must be > 0"))
        if self.solver.eps_fs <= 0:
            err.append(("solver.eps_fs", "must be > 0"))
        return err


_SECTIONS = {"mesh": MeshSpec, "material": Material, "bc": BoundaryConditions, "time": TimeSpec,
             "solver": SolverSpec}


def _convert(path, text, default, annotation):
    text = text.strip()
    ann = str(annotation)
    try:
        if "tuple" in ann:
            return tuple(float(x) for x in text.replace(",", " ").split())
        if "bool" in ann:
            low = text.lower()
            if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError(text)
            return low in ("1", "true", "yes", "on")
        if "int" in ann:
            return int(text)
        if "float" in ann:
            return float(text)
    except ValueError:
        raise ConfigError([(path, f"cannot parse {text!r}")]) from None
    return text


def parse_config(text: str) -> CaseConfig:
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keep E, M case-sensitive
    cp.read_string(text)
    cfg = CaseConfig()
    errors = []
    for sec in cp.sections():
        items = dict(cp.items(sec))
        if sec == "case":
            for k, v in items.items():
                if k == "id":
                    cfg.case = v.strip()
                else:
                    errors.append((f"case.{k}", "unknown key"))
        elif sec == "output":
            for k, v in items.items():
                if k == "dir":
                    cfg.output = v.strip()
                else:
                    errors.append((f"output.{k}", "unknown key"))
        elif sec in _SECTIONS:
            obj = getattr(cfg, sec)
            known = {f.name: f for f in fields(obj)}
            upd = {}
            for k, v in items.items():
                if k not in known:
                    errors.append((f"{sec}.{k}", "unknown key"))
                    continue
                try:
                    upd[k] = _convert(f"{sec}.{k}", v, getattr(obj, k), known[k].type)
                except ConfigError as e:
                    errors.extend(e.errors)
            setattr(cfg, sec, replace(obj, **upd))
        else:
            errors.append((sec, "unknown section"))
    errors += cfg.problems()
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path) -> CaseConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def dump_config(cfg: CaseConfig) -> str:
    lines = ["[case]", f"id = {cfg.case}", ""]
    for sec in _SECTIONS:
        obj = getattr(cfg, sec)
        lines.append(f"[{sec}]")
        for f in fields(obj):
            v = getattr(obj, f.name)
            if v is None:
                continue
            if isinstance(v, tuple):
                v = " ".join(repr(float(x)) for x in v)
            lines.append(f"{f.name} = {v}")
        lines.append("")
    lines += ["[output]", f"dir = {cfg.output}", ""]
    return "\n".join(lines)
