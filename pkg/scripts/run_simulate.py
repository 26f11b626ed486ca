#!/usr/bin/env python3
"""Run the `simulate` subcommand on a named preset.

Usage: python scripts/run_simulate.py [preset] [outdir]
"""

import sys
from pathlib import Path

from platelab.cli import main
from platelab.presets import config_text, preset_names


def run(preset: str, outdir: str) -> int:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    cfg_path = out / f"{preset}.cfg"
    cfg_path.write_text(config_text(preset), encoding="utf-8")
    return main(["simulate", "--config", str(cfg_path),
                 "--out", str(out / "run"), "--overwrite", "--plots"])


if __name__ == "__main__":
    preset = sys.argv[1] if len(sys.argv) > 1 else "general"
    if preset not in preset_names():
        sys.exit(f"unknown preset {preset!r}; choices: {preset_names()}")
    outdir = sys.argv[2] if len(sys.argv) > 2 else f"out/simulate_{preset}"
    sys.exit(run(preset, outdir))
