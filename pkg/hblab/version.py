from pathlib import Path

version_file = Path(__file__).parent / "support/VERSION"

__version__ = version_file.read_text().strip()
