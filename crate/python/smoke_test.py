"""Smoke test for the dictmon Python extension.

Imports an installed ``dictmon`` module if there is one (for example after
``maturin develop -m crates/python/Cargo.toml``); otherwise loads the
library produced by ``cargo build -p dictmon-py --release``.
"""

import importlib.util
import math
import random
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load():
    try:
        import dictmon  # noqa: F401

        return dictmon
    except ImportError:
        pass
    for name in ("libdictmon_py.so", "libdictmon_py.dylib", "dictmon_py.dll"):
        built = ROOT / "target" / "release" / name
        if built.exists():
            break
    else:
        sys.exit("dictmon extension not found; run `cargo build -p dictmon-py --release` first")
    suffix = ".pyd" if built.suffix == ".dll" else ".so"
    staged = Path(tempfile.mkdtemp()) / f"dictmon{suffix}"
    shutil.copy(built, staged)
    spec = importlib.util.spec_from_file_location("dictmon", staged)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main():
    dm = load()
    rng = random.Random(3)

    seed = dm.Dictionary.pseudorandom(8, 50, 10, seed=1)
    assert len(seed) == 8 and all(len(a) == 70 for a in seed.atoms)
    assert dm.Dictionary.pseudorandom(8, 50, 10, seed=1) == seed
    assert seed.distance(seed) == 0.0

    planted = [dm.gabor_atom(32, f, 4.0) for f in (0.05, 0.15, 0.3)]
    signal = [rng.gauss(0.0, 0.3) for _ in range(2048)]
    for _ in range(120):
        atom = rng.choice(planted)
        at = rng.randrange(len(signal) - len(atom))
        amp = rng.choice((-1, 1)) * rng.uniform(2, 4)
        for k, v in enumerate(atom):
            signal[at + k] += amp * v

    mp = dm.encode(signal, seed, "mp", 0.9)
    omp = dm.encode(signal, seed, "omp", 0.9)
    assert len(mp) == len(omp) == math.ceil(0.1 * 2048)
    assert omp.fidelity_db() >= mp.fidelity_db()
    energy = sum(v * v for v in signal)
    parts = sum(v * v for v in mp.residual) + sum(a * a for _, _, a in mp.instances)
    assert abs(energy - parts) < 1e-9 * energy

    updated = dm.gradient_update(seed, mp, eta=1e-3)
    assert updated.generation == 1 and updated.distance(seed) > 0.0

    mon = dm.Monitor(seed, "mp", 0.9, 0.0)
    for t in range(3):
        fid, dist, n = mon.step(signal, t)
        assert dist == 0.0 and n == 205
    assert len(mon.history) == 3

    assert dm.lowpass([1.0] * 5, 3.0) == [1.0] * 5
    scores = dm.mad_scores([2, 4, 4, 4, 5, 9])
    assert abs(scores[-1] - 5.0 / 0.5) < 1e-12
    _, auc = dm.roc([0.1, 0.2, 0.8, 0.9], [False, False, True, True])
    assert auc == 1.0

    with tempfile.TemporaryDirectory() as d:
        path = str(Path(d) / "seed.vdct")
        seed.save(path)
        assert dm.Dictionary.load(path) == seed

    try:
        dm.encode(signal, seed, "lasso")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown algorithm accepted")

    print(f"dictmon smoke test ok: MP {mp.fidelity_db():.2f} dB, OMP {omp.fidelity_db():.2f} dB")


if __name__ == "__main__":
    main()
