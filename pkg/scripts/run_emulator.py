"""
Emulator Runner
Usage:
    python scripts/run_emulator.py generate --split train --out runs/corpus
    python scripts/run_emulator.py train --arch m4 --corpus runs/corpus --out runs/m4
    python scripts/run_emulator.py eval --checkpoint runs/m4/best.ckpt --pde burgers
    python scripts/run_emulator.py selfcheck
"""

import sys
from pathlib import Path

# ── project root ──
PROJECT_ROOT = Path(__file__).resolve().parent.parent
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from cli.main import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
