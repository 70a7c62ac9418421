"""The ``.scn`` scenario format: parser, validator and canonical serializer.

A scenario file is line oriented::

    # units: hbar = 1; energies and times are dimensionless
    [basis]
    a b
    [components]
    S1 a
    S2 b
    [hamiltonian]
    a b 1.0 0.0        # row col re im, upper triangle only
    [jumps]
    S1 -> S2
    [initial]
    a 1.0 0.0
    [run]
    name two_level
    start S1
    dt 0.001
    t_max 1.5707963267948966
    method expm

Basis order defines state indices and component order defines the component
ordering used for stochastic selection, so both are preserved verbatim.
Hamiltonian, jump, initial and start entries are sorted into canonical
order. The Hamiltonian is completed Hermitian from its upper triangle.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

import numpy as np

SECTIONS = ("basis", "components", "hamiltonian", "jumps", "initial", "run")
METHODS = ("rk4", "expm")
EXPM_MAX_DIM = 64

_LABEL = re.compile(r"[A-Za-z_][A-Za-z0-9_.']*", re.ASCII)
_NUMBER = re.compile(r"[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?", re.ASCII)
_INT = re.compile(r"\d+", re.ASCII)

HEADER = "# nrules scenario; units: hbar = 1, energies and times dimensionless"


@dataclass(frozen=True)
class ParseDiagnostic:
    line: int
    column: int
    severity: str
    message: str

    def __str__(self) -> str:
        return f"{self.line}:{self.column}: {self.severity}: {self.message}"


class ScenarioError(ValueError):
    """Raised when a scenario has error diagnostics."""

    def __init__(self, diagnostics: list[ParseDiagnostic]):
        self.diagnostics = list(diagnostics)
        errors = [d for d in self.diagnostics if d.severity == "error"]
        super().__init__("; ".join(str(d) for d in errors) or "invalid scenario")


@dataclass(frozen=True)
class RunConfig:
    dt: float = 0.01
    t_max: float = 10.0
    tolerance: float = 1e-10
    method: str = "rk4"
    seed: int = 0


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    basis: tuple[str, ...]
    components: tuple[tuple[str, tuple[str, ...]], ...]
    hamiltonian: tuple[tuple[str, str, float, float], ...] = ()
    jumps: tuple[tuple[str, str], ...] = ()
    initial: tuple[tuple[str, float, float], ...] = ()
    start: tuple[str, ...] = ()
    run: RunConfig = field(default_factory=RunConfig)

    def __post_init__(self):
        basis = tuple(self.basis)
        bidx = {b: i for i, b in enumerate(basis)}
        far = len(basis)

        def bkey(label):
            return (bidx.get(label, far), label)

        comps = tuple(
            (name, tuple(sorted(members, key=bkey))) for name, members in self.components
        )
        cidx = {name: i for i, (name, _) in enumerate(comps)}
        cfar = len(comps)

        def ckey(name):
            return (cidx.get(name, cfar), name)

        ham = tuple(
            sorted(
                ((r, c, float(re_), float(im)) for r, c, re_, im in self.hamiltonian),
                key=lambda e: (bkey(e[0]), bkey(e[1]), e[2], e[3]),
            )
        )
        jumps = tuple(sorted(((a, b) for a, b in self.jumps), key=lambda e: (ckey(e[0]), ckey(e[1]))))
        init = tuple(
            sorted(((b, float(re_), float(im)) for b, re_, im in self.initial), key=lambda e: (bkey(e[0]), e[1], e[2]))
        )
        start = self.start
        if not start:
            owner = {b: name for name, members in comps for b in members}
            start = {owner[b] for b, re_, im in init if (re_ or im) and b in owner}
        start = tuple(sorted(start, key=ckey))
        for name, value in (
            ("basis", basis),
            ("components", comps),
            ("hamiltonian", ham),
            ("jumps", jumps),
            ("initial", init),
            ("start", start),
        ):
            object.__setattr__(self, name, value)

    # numeric views -------------------------------------------------------

    @cached_property
    def basis_index(self) -> dict[str, int]:
        return {b: i for i, b in enumerate(self.basis)}

    @cached_property
    def component_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.components)

    @cached_property
    def component_indices(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(self.basis_index[b] for b in members) for _, members in self.components)

    def hamiltonian_matrix(self) -> np.ndarray:
        n = len(self.basis)
        h = np.zeros((n, n), dtype=complex)
        for r, c, re_, im in self.hamiltonian:
            i, j = self.basis_index[r], self.basis_index[c]
            if i == j:
                h[i, i] = re_
            else:
                h[i, j] = complex(re_, im)
                h[j, i] = complex(re_, -im)
        return h

    def initial_vector(self) -> np.ndarray:
        psi = np.zeros(len(self.basis), dtype=complex)
        for b, re_, im in self.initial:
            psi[self.basis_index[b]] = complex(re_, im)
        return psi

    def start_components(self) -> tuple[str, ...]:
        """Declared start components; defaults to those holding initial amplitude."""
        return self.start


# parsing -----------------------------------------------------------------


@dataclass
class _Raw:
    name: str = "unnamed"
    basis: list = field(default_factory=list)
    components: list = field(default_factory=list)
    hamiltonian: list = field(default_factory=list)
    jumps: list = field(default_factory=list)
    initial: list = field(default_factory=list)
    start: list = field(default_factory=list)
    run: dict = field(default_factory=dict)
    pos: dict = field(default_factory=dict)


def _tokens(line: str) -> list[tuple[str, int]]:
    return [(m.group(0), m.start() + 1) for m in re.finditer(r"\S+", line)]


def parse_bytes(data: bytes) -> tuple[ScenarioSpec | None, list[ParseDiagnostic]]:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        line = data[: exc.start].count(b"\n") + 1
        col = exc.start - (data.rfind(b"\n", 0, exc.start) + 1) + 1
        return None, [ParseDiagnostic(line, col, "error", "input is not valid UTF-8")]
    return parse_with_diagnostics(text)


def parse(text: str) -> ScenarioSpec:
    """Parse and validate scenario source; raise ScenarioError on errors."""
    spec, diags = parse_with_diagnostics(text)
    if spec is None:
        raise ScenarioError(diags)
    return spec


def parse_with_diagnostics(text: str) -> tuple[ScenarioSpec | None, list[ParseDiagnostic]]:
    """Parse scenario source without raising.

    Returns the scenario (None when any error diagnostic exists) and all
    diagnostics, warnings included.
    """
    diags: list[ParseDiagnostic] = []
    raw = _Raw()
    section = None
    seen: set[str] = set()

    def err(line, col, msg):
        diags.append(ParseDiagnostic(line, col, "error", msg))

    def number(tok, line, col):
        if not _NUMBER.fullmatch(tok):
            err(line, col, f"malformed number {tok!r}")
            return None
        value = float(tok)
        if not math.isfinite(value):
            err(line, col, f"number out of range {tok!r}")
            return None
        return value

    def label(tok, line, col, what="label"):
        if not _LABEL.fullmatch(tok):
            err(line, col, f"invalid {what} {tok!r}")
            return False
        return True

    for lineno, rawline in enumerate(text.split("\n"), start=1):
        line = rawline.split("#", 1)[0].rstrip("\r")
        toks = _tokens(line)
        if not toks:
            continue
        head, col0 = toks[0]
        if head.startswith("["):
            if len(toks) != 1 or not head.endswith("]"):
                err(lineno, col0, "malformed section header")
                section = None
                continue
            name = head[1:-1]
            if name not in SECTIONS:
                err(lineno, col0, f"unknown section [{name}]")
                section = None
            elif name in seen:
                err(lineno, col0, f"duplicate section [{name}]")
                section = None
            else:
                seen.add(name)
                section = name
            continue
        if section is None:
            err(lineno, col0, "entry outside a known section")
            continue

        if section == "basis":
            for tok, col in toks:
                if not label(tok, lineno, col):
                    continue
                if ("basis", tok) in raw.pos:
                    err(lineno, col, f"duplicate basis label {tok!r}")
                    continue
                raw.pos[("basis", tok)] = (lineno, col)
                raw.basis.append(tok)

        elif section == "components":
            if len(toks) < 2:
                err(lineno, col0, "component needs a name and at least one basis label")
                continue
            if not label(head, lineno, col0, "component name"):
                continue
            if ("component", head) in raw.pos:
                err(lineno, col0, f"duplicate component {head!r}")
                continue
            raw.pos[("component", head)] = (lineno, col0)
            members = []
            for tok, col in toks[1:]:
                if not label(tok, lineno, col):
                    continue
                if tok in members:
                    err(lineno, col, f"duplicate member {tok!r} in component {head!r}")
                    continue
                raw.pos.setdefault(("member", tok), (lineno, col))
                members.append(tok)
            raw.components.append((head, tuple(members)))

        elif section == "hamiltonian":
            if len(toks) not in (3, 4):
                err(lineno, col0, "hamiltonian entry is: row col re [im]")
                continue
            (r, rc), (c, cc) = toks[0], toks[1]
            if not (label(r, lineno, rc) & label(c, lineno, cc)):
                continue
            vals = [number(t, lineno, col) for t, col in toks[2:]]
            if any(v is None for v in vals):
                continue
            re_, im = vals[0], vals[1] if len(vals) == 2 else 0.0
            key = ("ham", r, c)
            if key in raw.pos:
                prev = next(e for e in raw.hamiltonian if e[0] == r and e[1] == c)
                if (prev[2], prev[3]) != (re_, im):
                    err(lineno, col0, f"conflicting entries for ({r}, {c})")
                else:
                    diags.append(ParseDiagnostic(lineno, col0, "warning", f"duplicate entry ({r}, {c})"))
                continue
            raw.pos[key] = (lineno, col0)
            raw.hamiltonian.append((r, c, re_, im))

        elif section == "jumps":
            parts = [t for t in toks if t[0] != "->"]
            if len(parts) != 2 or len(toks) not in (2, 3) or (len(toks) == 3 and toks[1][0] != "->"):
                err(lineno, col0, "jump entry is: FROM -> TO")
                continue
            (a, ac), (b, bc) = parts
            if not (label(a, lineno, ac, "component name") & label(b, lineno, bc, "component name")):
                continue
            if ("jump", a, b) in raw.pos:
                diags.append(ParseDiagnostic(lineno, col0, "warning", f"duplicate jump {a} -> {b}"))
                continue
            raw.pos[("jump", a, b)] = (lineno, col0)
            raw.jumps.append((a, b))

        elif section == "initial":
            if len(toks) not in (2, 3):
                err(lineno, col0, "initial entry is: label re [im]")
                continue
            if not label(head, lineno, col0):
                continue
            vals = [number(t, lineno, col) for t, col in toks[1:]]
            if any(v is None for v in vals):
                continue
            if ("initial", head) in raw.pos:
                err(lineno, col0, f"duplicate initial amplitude for {head!r}")
                continue
            raw.pos[("initial", head)] = (lineno, col0)
            raw.initial.append((head, vals[0], vals[1] if len(vals) == 2 else 0.0))

        elif section == "run":
            key = head
            vals = toks[1:]
            if ("run", key) in raw.pos:
                err(lineno, col0, f"duplicate run key {key!r}")
                continue
            raw.pos[("run", key)] = (lineno, col0)
            if key == "start":
                if not vals:
                    err(lineno, col0, "start needs at least one component")
                for tok, col in vals:
                    if label(tok, lineno, col, "component name"):
                        raw.pos[("start", tok)] = (lineno, col)
                        raw.start.append(tok)
                continue
            if len(vals) != 1:
                err(lineno, col0, f"run key {key!r} takes exactly one value")
                continue
            tok, col = vals[0]
            if key == "name":
                if label(tok, lineno, col, "name"):
                    raw.name = tok
            elif key in ("dt", "t_max", "tolerance"):
                v = number(tok, lineno, col)
                if v is not None:
                    raw.run[key] = v
            elif key == "method":
                if tok not in METHODS:
                    err(lineno, col, f"method must be one of {', '.join(METHODS)}")
                else:
                    raw.run[key] = tok
            elif key == "seed":
                if not _INT.fullmatch(tok) or len(tok) > 19 or int(tok) >= 2**63:
                    err(lineno, col, f"seed must be an integer in [0, 2^63), got {tok!r}")
                else:
                    raw.run[key] = int(tok)
            else:
                err(lineno, col0, f"unknown run key {key!r}")

    for name in ("basis", "components", "initial"):
        if name not in seen:
            err(1, 1, f"missing section [{name}]")

    spec = ScenarioSpec(
        name=raw.name,
        basis=tuple(raw.basis),
        components=tuple(raw.components),
        hamiltonian=tuple(raw.hamiltonian),
        jumps=tuple(raw.jumps),
        initial=tuple(raw.initial),
        start=tuple(raw.start),
        run=RunConfig(**raw.run),
    )
    diags.extend(validate(spec, raw.pos))
    diags.sort(key=lambda d: (d.line, d.column))
    if any(d.severity == "error" for d in diags):
        return None, diags
    return spec, diags


# validation --------------------------------------------------------------


def validate(spec: ScenarioSpec, positions: dict | None = None) -> list[ParseDiagnostic]:
    """Semantic checks. An empty list means the scenario is fully valid."""
    pos = positions or {}
    out: list[ParseDiagnostic] = []

    def at(key):
        return pos.get(key, (0, 0))

    def err(key, msg):
        out.append(ParseDiagnostic(*at(key), "error", msg))

    def warn(key, msg):
        out.append(ParseDiagnostic(*at(key), "warning", msg))

    if not _LABEL.fullmatch(spec.name):
        err(("run", "name"), f"invalid name {spec.name!r}")
    if len(set(spec.basis)) != len(spec.basis):
        err(("basis",), "duplicate basis labels")
    bset = set(spec.basis)
    owner: dict[str, str] = {}
    cnames = [name for name, _ in spec.components]
    if len(set(cnames)) != len(cnames):
        err(("components",), "duplicate component names")
    for name, members in spec.components:
        if not members:
            err(("component", name), f"component {name!r} is empty")
        for b in members:
            if b not in bset:
                err(("member", b), f"undeclared basis label {b!r} in component {name!r}")
            elif b in owner and owner[b] != name:
                err(("member", b), f"basis label {b!r} is in components {owner[b]!r} and {name!r}")
            else:
                owner[b] = name
    for b in spec.basis:
        if b not in owner:
            err(("basis", b), f"basis label {b!r} belongs to no component")

    bidx = {b: i for i, b in enumerate(spec.basis)}
    seen_pairs: dict = {}
    for r, c, re_, im in spec.hamiltonian:
        key = ("ham", r, c)
        ok = True
        for lab in (r, c):
            if lab not in bset:
                err(key, f"undeclared basis label {lab!r} in hamiltonian")
                ok = False
        if not (math.isfinite(re_) and math.isfinite(im)):
            err(key, "non-finite hamiltonian entry")
            ok = False
        if not ok:
            continue
        if bidx[r] > bidx[c]:
            err(key, f"({r}, {c}) is below the diagonal; only upper-triangle entries are accepted")
        if r == c and im != 0.0:
            err(key, f"diagonal entry ({r}, {r}) must be real")
        if (r, c) in seen_pairs and seen_pairs[(r, c)] != (re_, im):
            err(key, f"conflicting entries for ({r}, {c})")
        seen_pairs[(r, c)] = (re_, im)

    cset = set(cnames)
    for a, b in spec.jumps:
        key = ("jump", a, b)
        bad = False
        for cname in (a, b):
            if cname not in cset:
                err(key, f"unknown component {cname!r} in jump")
                bad = True
        if bad:
            continue
        if a == b:
            err(key, f"self-jump {a} -> {a}")
            continue
        ma, mb = set(dict(spec.components)[a]), set(dict(spec.components)[b])
        coupled = any(
            (re_ or im) and ({r, c} & ma) and ({r, c} & mb) and r != c
            for r, c, re_, im in spec.hamiltonian
        )
        if not coupled:
            warn(key, f"edge {a} -> {b} carries no current (no coupling entries)")
    if len(set(spec.jumps)) != len(spec.jumps):
        warn(("jumps",), "duplicate jump edges")

    for s in spec.start:
        if s not in cset:
            err(("start", s), f"unknown start component {s!r}")
    start_members = {b for name, members in spec.components if name in spec.start_components() for b in members}
    norm = 0.0
    seen_init = set()
    for b, re_, im in spec.initial:
        key = ("initial", b)
        if b not in bset:
            err(key, f"undeclared basis label {b!r} in initial state")
            continue
        if b in seen_init:
            err(key, f"duplicate initial amplitude for {b!r}")
        seen_init.add(b)
        if not (math.isfinite(re_) and math.isfinite(im)):
            err(key, "non-finite initial amplitude")
            continue
        if (re_ or im) and b not in start_members:
            err(key, f"initial amplitude on {b!r} lies outside the start components")
        norm += re_ * re_ + im * im
    if not norm > 0.0:
        err(("initial",), "initial state has zero square modulus")

    run = spec.run
    for key in ("dt", "t_max", "tolerance"):
        v = getattr(run, key)
        if not (isinstance(v, float | int) and math.isfinite(v) and v > 0):
            err(("run", key), f"{key} must be positive and finite")
    if run.method not in METHODS:
        err(("run", "method"), f"method must be one of {', '.join(METHODS)}")
    elif run.method == "expm" and len(spec.basis) > EXPM_MAX_DIM:
        err(("run", "method"), f"expm is limited to {EXPM_MAX_DIM} basis states")
    if not (isinstance(run.seed, int) and 0 <= run.seed < 2**63):
        err(("run", "seed"), "seed must be an integer in [0, 2^63)")
    return out


# serialization -----------------------------------------------------------


def _num(x: float) -> str:
    return repr(float(x))


def serialize(spec: ScenarioSpec) -> str:
    """Canonical text; ``parse(serialize(s)) == s`` for every valid spec."""
    lines = [HEADER, "[basis]"]
    lines.extend(spec.basis)
    lines.append("[components]")
    lines.extend(" ".join((name,) + members) for name, members in spec.components)
    lines.append("[hamiltonian]")
    lines.extend(f"{r} {c} {_num(re_)} {_num(im)}" for r, c, re_, im in spec.hamiltonian)
    lines.append("[jumps]")
    lines.extend(f"{a} -> {b}" for a, b in spec.jumps)
    lines.append("[initial]")
    lines.extend(f"{b} {_num(re_)} {_num(im)}" for b, re_, im in spec.initial)
    run = spec.run
    lines += [
        "[run]",
        f"name {spec.name}",
        "start " + " ".join(spec.start_components()),
        f"dt {_num(run.dt)}",
        f"t_max {_num(run.t_max)}",
        f"tolerance {_num(run.tolerance)}",
        f"method {run.method}",
        f"seed {run.seed}",
    ]
    return "\n".join(lines) + "\n"


def load(path) -> ScenarioSpec:
    with open(path, "rb") as fh:
        spec, diags = parse_bytes(fh.read())
    if spec is None:
        raise ScenarioError(diags)
    return spec


def jump_successors(spec: ScenarioSpec) -> dict[str, tuple[str, ...]]:
    out: dict[str, list[str]] = {name: [] for name in spec.component_names}
    for a, b in spec.jumps:
        out[a].append(b)
    return {k: tuple(v) for k, v in out.items()}


def iter_root_to_leaf(spec: ScenarioSpec) -> Iterable[tuple[str, ...]]:
    """All jump-graph paths from the start components to sinks (acyclic graphs)."""
    succ = jump_successors(spec)

    def walk(path):
        nxt = succ[path[-1]]
        if not nxt:
            yield path
        for b in nxt:
            if b in path:
                raise ValueError(f"jump graph has a cycle through {b!r}")
            yield from walk(path + (b,))

    for s in spec.start_components():
        yield from walk((s,))
