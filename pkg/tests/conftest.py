"""Shared pytest configuration."""

import sys
from pathlib import Path

# let test modules import sibling helpers (gradcheck, oracles)
sys.path.insert(0, str(Path(__file__).parent))
