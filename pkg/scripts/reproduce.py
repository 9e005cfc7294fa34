"""Regenerate the catalog, the scaling sweeps and a Monte Carlo run.

Every step goes through the command-line runner, so each output directory
holds a JSON report that can be rerun with ``longigate <command> --config``.

Usage::

    python3 scripts/reproduce.py --out results --replicas 2000
"""

import argparse
import json
import os
import subprocess
import sys
import tempfile
from pathlib import Path

SWEEPS = {
    "sweep_quality": {"Q_dimless": {"logspace": [1e4, 1e7, 31]}},
    "sweep_occupation": {"n_bar_dimless": {"logspace": [1e-6, 1e-1, 26]}},
    "sweep_amplitude": {"eta_minus_dimless": {"logspace": [5e-4, 1e-2, 21]}},
}


def run(command, out_dir, spec=None, extra=()):
    argv = [sys.executable, "-m", "longigate.cli", command, "--out", str(out_dir), *extra]
    if spec is not None:
        with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as handle:
            json.dump(spec, handle)
        argv += ["--config", handle.name]
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, check=False)
    finally:
        if spec is not None:
            os.unlink(handle.name)
    print(f"{command:8s} -> {out_dir} (exit {proc.returncode})")
    if proc.returncode not in (0, 3):
        sys.stderr.write(proc.stderr)
        raise SystemExit(proc.returncode)
    return proc


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=Path("results"))
    parser.add_argument("--preset", default="flux_q25k")
    parser.add_argument("--replicas", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=2024)
    args = parser.parse_args(argv)

    proc = run("table1", args.out / "catalog", extra=["--check", "--format", "table"])
    print(proc.stdout)
    run("design", args.out / "design", {"command": "design", "preset": args.preset})
    run("simulate", args.out / "simulate", {"command": "simulate", "preset": args.preset})
    for name, sweep in SWEEPS.items():
        run("sweep", args.out / name, {"command": "sweep", "preset": args.preset, "sweep": sweep})
    run("mc", args.out / "mc", {"command": "mc", "preset": args.preset, "seed_count": args.seed,
                                "mc": {"replicas_count": args.replicas}})


if __name__ == "__main__":
    main()
