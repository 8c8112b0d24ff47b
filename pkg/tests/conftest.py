import sys
from pathlib import Path

# Make the sibling util module importable from every test file.
sys.path.insert(0, str(Path(__file__).parent))
