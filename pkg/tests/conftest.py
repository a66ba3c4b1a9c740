from __future__ import annotations

import sys
from pathlib import Path

import pytest

# the pure-Python oracle lives beside the tests, not in the package
sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"


def build_tree(root: Path, files: dict[str, bytes]) -> None:
    """Lay out literal file contents under root."""
    for rel, content in files.items():
        dest = root / rel
        dest.parent.mkdir(parents=True, exist_ok=True)
        dest.write_bytes(content)


@pytest.fixture
def small_tree(tmp_path: Path) -> Path:
    root = tmp_path / "tree"
    build_tree(
        root,
        {
            "a.txt": b"x",
            "sub/b.txt": b"y",
            "sub/deep/c.bin": bytes(range(256)),
        },
    )
    return root
