"""Puts the repository root on sys.path so `import config` resolves in tests."""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))
