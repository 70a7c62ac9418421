"""Regenerate the shipped scenario files under src/nrules/scenarios/.

Small scenarios are spelled out; banded ones (cascade, detector, neutron)
are built from a few physical parameters. Run from the repository root:

    python3 tools/make_scenarios.py
"""

from __future__ import annotations

import math
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from nrules.dsl import RunConfig, ScenarioSpec, parse, serialize, validate  # noqa: E402

OUT = ROOT / "src" / "nrules" / "scenarios"


def r(x: float) -> float:
    return float(round(x, 12))


def two_level() -> tuple[ScenarioSpec, str]:
    spec = ScenarioSpec(
        name="two_level",
        basis=("s1", "s2"),
        components=(("S1", ("s1",)), ("S2", ("s2",))),
        hamiltonian=(("s1", "s2", 1.0, 0.0),),
        jumps=(("S1", "S2"),),
        initial=(("s1", 1.0, 0.0),),
        run=RunConfig(dt=0.001, t_max=r(math.pi / 2), method="expm", seed=1),
    )
    return spec, "one realized state feeding one ready state with g = 1; horizon pi/(2g)"


def two_detector() -> tuple[ScenarioSpec, str]:
    spec = ScenarioSpec(
        name="two_detector",
        basis=("src", "d1", "d2"),
        components=(("S", ("src",)), ("D1", ("d1",)), ("D2", ("d2",))),
        hamiltonian=(("src", "d1", 0.6, 0.0), ("src", "d2", 0.8, 0.0)),
        jumps=(("S", "D1"), ("S", "D2")),
        initial=(("src", 1.0, 0.0),),
        run=RunConfig(dt=0.002, t_max=r(4.5 * math.pi), method="expm", seed=2),
    )
    return spec, "source split between two detectors with Born weights 0.36 and 0.64"


def counter_chain(n: int = 5) -> tuple[ScenarioSpec, str]:
    basis = tuple(f"c{i}" for i in range(n))
    spec = ScenarioSpec(
        name="counter_chain",
        basis=basis,
        components=tuple((f"C{i}", (b,)) for i, b in enumerate(basis)),
        hamiltonian=tuple((basis[i], basis[i + 1], 1.0, 0.0) for i in range(n - 1)),
        jumps=tuple((f"C{i}", f"C{i + 1}") for i in range(n - 1)),
        initial=(("c0", 1.0, 0.0),),
        run=RunConfig(dt=0.005, t_max=40.0, method="expm", seed=3),
    )
    return spec, "counter advancing C0 -> C1 -> ... ; under the full Hamiltonian C1 and C2 overlap"


def fig1_parallel() -> tuple[ScenarioSpec, str]:
    spec = ScenarioSpec(
        name="fig1_parallel",
        basis=("a0", "al", "ar", "af"),
        components=(("A0", ("a0",)), ("Al", ("al",)), ("Ar", ("ar",)), ("Af", ("af",))),
        hamiltonian=(
            ("a0", "al", 1.0, 0.0),
            ("a0", "ar", 1.0, 0.0),
            ("al", "af", 1.0, 0.0),
            ("ar", "af", 1.0, 0.0),
        ),
        jumps=(("A0", "Al"), ("A0", "Ar"), ("Al", "Af"), ("Ar", "Af")),
        initial=(("a0", 1.0, 0.0),),
        run=RunConfig(dt=0.005, t_max=40.0, method="expm", seed=4),
    )
    return spec, "clockwise and counterclockwise routes to a common final state; no direct A0-Af coupling"


def fig2_tree() -> tuple[ScenarioSpec, str]:
    names = ["AB0"]
    basis = ["A0.B0"]
    ham, jumps = [], []
    for x in "123":
        names.append(f"AB{x}")
        basis.append(f"A{x}.B{x}")
        ham.append(("A0.B0", f"A{x}.B{x}", 1.5, 0.0))
        jumps.append(("AB0", f"AB{x}"))
        for y in "ab":
            names.append(f"AB{x}{y}")
            basis.append(f"A{x}{y}.B{x}{y}")
            ham.append((f"A{x}.B{x}", f"A{x}{y}.B{x}{y}", 1.5, 0.0))
            jumps.append((f"AB{x}", f"AB{x}{y}"))
    spec = ScenarioSpec(
        name="fig2_tree",
        basis=tuple(basis),
        components=tuple((n, (b,)) for n, b in zip(names, basis)),
        hamiltonian=tuple(ham),
        jumps=tuple(jumps),
        initial=(("A0.B0", 1.0, 0.0),),
        run=RunConfig(dt=0.01, t_max=60.0, method="expm", seed=5),
    )
    return spec, "three counters, then one of two further sources per counter: six sequences"


def band(n: int, width: float) -> np.ndarray:
    return np.linspace(-width / 2, width / 2, n)


def cascade(n: int = 24, width: float = 2.4, gamma: float = 0.25) -> tuple[ScenarioSpec, str]:
    """A5 -> A2 -> A0 with each photon drawn from an n-level band (Wigner-Weisskopf couplings)."""
    eps = band(n, width)
    rho = (n - 1) / width
    v = math.sqrt(gamma / (2 * math.pi * rho))
    a2 = [f"a2.k{k:02d}" for k in range(n)]
    a0 = [[f"a0.k{k:02d}.q{q:02d}" for q in range(n)] for k in range(n)]
    ham = []
    for k in range(n):
        ham.append(("a5", a2[k], r(v), 0.0))
        if eps[k] != 0:
            ham.append((a2[k], a2[k], r(eps[k]), 0.0))
        for q in range(n):
            ham.append((a2[k], a0[k][q], r(v), 0.0))
            e = eps[k] + eps[q]
            if abs(e) > 1e-12:
                ham.append((a0[k][q], a0[k][q], r(e), 0.0))
    flat = [b for row in a0 for b in row]
    spec = ScenarioSpec(
        name="cascade",
        basis=("a5", *a2, *flat),
        components=(("A5", ("a5",)), ("A2", tuple(a2)), ("A0", tuple(flat))),
        hamiltonian=tuple(ham),
        jumps=(("A5", "A2"), ("A2", "A0")),
        initial=(("a5", 1.0, 0.0),),
        run=RunConfig(dt=0.004, t_max=24.0, method="rk4", seed=6),
    )
    note = f"two-photon cascade; photon bands of {n} levels over width {width}, decay rate {gamma} per step"
    return spec, note


def detector(n_sites: int = 48, x0: float = 10.0, sigma: float = 3.0, kappa: float = 0.06) -> tuple[ScenarioSpec, str]:
    """Tight-binding packet passing a weakly coupled capture region.

    The capture states sit at the band centre, have no internal couplings
    and couple to sites 24..31, so the truncated and full Hamiltonians agree
    until the first collapse.
    """
    sites = [f"x{j:02d}" for j in range(n_sites)]
    det_sites = range(24, 32)
    caps = [f"cap{j:02d}" for j in det_sites]
    ham = [(sites[j], sites[j + 1], -1.0, 0.0) for j in range(n_sites - 1)]
    ham += [(sites[j], c, kappa, 0.0) for j, c in zip(det_sites, caps)]
    j = np.arange(n_sites)
    amp = np.exp(-((j - x0) ** 2) / (4 * sigma**2) + 0.5j * math.pi * j)
    amp /= np.linalg.norm(amp)
    initial = tuple((sites[i], r(a.real), r(a.imag)) for i, a in enumerate(amp) if abs(a) > 1e-9)
    spec = ScenarioSpec(
        name="detector",
        basis=(*sites, *caps),
        components=(("P", tuple(sites)), ("D", tuple(caps))),
        hamiltonian=tuple(ham),
        jumps=(("P", "D"),),
        initial=initial,
        run=RunConfig(dt=0.005, t_max=12.0, method="expm", seed=7),
    )
    return spec, "wave packet on a 48-site chain crossing a weak resonant capture region (about 9% capture)"


def neutron(n: int = 32, x0: float = 6.0, sigma: float = 3.0, kappa: float = 0.05) -> tuple[ScenarioSpec, str]:
    sites = [f"n{j:02d}" for j in range(n)]
    prods = [f"epv{j:02d}" for j in range(n)]
    ham = []
    for j in range(n):
        a, b = sorted((j, (j + 1) % n))
        ham.append((sites[a], sites[b], -1.0, 0.0))
        ham.append((prods[a], prods[b], -1.0, 0.0))
        ham.append((sites[j], prods[j], kappa, 0.0))
    j = np.arange(n)
    amp = np.exp(-((j - x0) ** 2) / (4 * sigma**2) + 0.5j * math.pi * j)
    amp /= np.linalg.norm(amp)
    initial = tuple((sites[i], r(a.real), r(a.imag)) for i, a in enumerate(amp) if abs(a) > 1e-9)
    spec = ScenarioSpec(
        name="neutron",
        basis=(*sites, *prods),
        components=(("N", tuple(sites)), ("EPV", tuple(prods))),
        hamiltonian=tuple(ham),
        jumps=(("N", "EPV"),),
        initial=initial,
        run=RunConfig(dt=0.005, t_max=16.0, method="expm", seed=8),
    )
    return spec, "neutron packet on a 32-site ring decaying into a co-located e p nu component"


def spin_fermions() -> tuple[ScenarioSpec, str]:
    spec = ScenarioSpec(
        name="spin_fermions",
        basis=("f1f2.M", "F1up.Mdown", "F1down.Mup"),
        components=(("F1F2M", ("f1f2.M",)), ("UpDown", ("F1up.Mdown",)), ("DownUp", ("F1down.Mup",))),
        hamiltonian=(("f1f2.M", "F1up.Mdown", 1.0, 0.0), ("f1f2.M", "F1down.Mup", 1.0, 0.0)),
        jumps=(("F1F2M", "UpDown"), ("F1F2M", "DownUp")),
        initial=(("f1f2.M", 1.0, 0.0),),
        run=RunConfig(dt=0.005, t_max=20.0, method="expm", seed=9),
    )
    return spec, "spin measurement on the second of two correlated fermions; outcomes anticorrelated"


def observer_chain(m: int = 4, lam: float = 0.5, g: float = 0.5) -> tuple[ScenarioSpec, str]:
    """Detector window -> display chain with perfect-transfer couplings.

    The brain label changes to B1 only on the display-end state.
    """
    chain = ["D1w.B0"] + [f"D1s{k}.B0" for k in range(1, m)] + ["D1d.B1"]
    ham = [("psi.D0.B0", "D1w.B0", g, 0.0)]
    ham += [(chain[k - 1], chain[k], r(lam * math.sqrt(k * (m + 1 - k))), 0.0) for k in range(1, m + 1)]
    spec = ScenarioSpec(
        name="observer_chain",
        basis=("psi.D0.B0", *chain),
        components=(("S0", ("psi.D0.B0",)), ("R1", tuple(chain))),
        hamiltonian=tuple(ham),
        jumps=(("S0", "R1"),),
        initial=(("psi.D0.B0", 1.0, 0.0),),
        run=RunConfig(dt=0.005, t_max=20.0, method="expm", seed=10),
    )
    return spec, "observer watching a detector; the capture reaches the display (B1) only after collapse"


BUILDERS = (
    two_level,
    two_detector,
    counter_chain,
    fig1_parallel,
    fig2_tree,
    cascade,
    detector,
    neutron,
    spin_fermions,
    observer_chain,
)


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    for build in BUILDERS:
        spec, note = build()
        errors = [d for d in validate(spec) if d.severity == "error"]
        if errors:
            raise SystemExit(f"{spec.name}: {errors}")
        text = serialize(spec)
        head, rest = text.split("\n", 1)
        text = f"{head}\n# {note}\n{rest}"
        assert parse(text) == spec
        (OUT / f"{spec.name}.scn").write_text(text, encoding="utf-8")
        print(f"{spec.name}: {len(spec.basis)} states, {len(spec.components)} components")


if __name__ == "__main__":
    main()
