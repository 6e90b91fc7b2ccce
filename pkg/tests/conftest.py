"""Make the oracle module importable from any test."""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))
