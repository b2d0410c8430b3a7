"""Train the runs read by the long acceptance criteria.

    python scripts/run_long_criteria.py smoke            # 3 seeds, empty room
    python scripts/run_long_criteria.py garage           # 3 seeds x (mirror, raw)

Each run goes through the ``maernav train`` CLI into ``artifacts/``; its
wall-clock and CPU time are written next to the log as ``timing.json``.
"""

import argparse
import json
import resource
import subprocess
import sys
import time
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def child_cpu() -> float:
    ru = resource.getrusage(resource.RUSAGE_CHILDREN)
    return ru.ru_utime + ru.ru_stime


def train(config: Path, out: Path, seed: int, extra: list[str]) -> None:
    cmd = [sys.executable, "-m", "maernav.cli", "train", "--config", str(config), "--seed", str(seed),
           "--out", str(out), *extra]
    cpu0, t0 = child_cpu(), time.perf_counter()
    subprocess.run(cmd, check=True)
    timing = {"wall_s": time.perf_counter() - t0, "cpu_s": child_cpu() - cpu0, "command": cmd[2:]}
    (out / "timing.json").write_text(json.dumps(timing, indent=1) + "\n")
    print(f"{out}: {timing['cpu_s'] / 60:.1f} min cpu", flush=True)


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("which", choices=["smoke", "garage"])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--steps", type=int, help="override the config budget")
    p.add_argument("--only", choices=["maer", "raw"], help="garage: train just one variant")
    p.add_argument("--out", default=str(ROOT / "artifacts"))
    args = p.parse_args()
    extra = ["--steps", str(args.steps)] if args.steps else []
    config = ROOT / "configs" / f"{args.which}.cfg"
    out = Path(args.out) / args.which
    for seed in args.seeds:
        if args.which == "smoke":
            train(config, out / f"seed{seed}", seed, extra)
        else:
            if args.only != "raw":
                train(config, out / "maer" / f"seed{seed}", seed, extra)
            if args.only != "maer":
                train(config, out / "raw" / f"seed{seed}", seed, extra + ["--no-mirror"])


if __name__ == "__main__":
    main()
