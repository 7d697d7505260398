import ast
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def _imported_roots(path):
    tree = ast.parse(path.read_text(encoding="utf-8"))
    roots = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            roots.update(alias.name.split(".")[0] for alias in node.names)
        elif isinstance(node, ast.ImportFrom) and node.module:
            roots.add(node.module.split(".")[0])
    return roots


def test_core_modules_do_not_import_scripts():
    for path in (ROOT / "dualscale").glob("*.py"):
        assert "scripts" not in _imported_roots(path), path.name


def test_core_modules_stick_to_the_numeric_stack():
    allowed = {"dualscale", "numpy", "scipy"} | set(sys.stdlib_module_names)
    for path in (ROOT / "dualscale").glob("*.py"):
        assert _imported_roots(path) <= allowed, path.name


def test_entrypoint_only_uses_the_package_and_stdlib():
    roots = _imported_roots(ROOT / "scripts" / "run_dualscale.py")
    assert roots <= {"dualscale"} | set(sys.stdlib_module_names)
