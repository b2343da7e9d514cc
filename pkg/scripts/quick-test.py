#!/usr/bin/env python3
"""
Quick Test Runner - validates that the package imports, the CLI starts and the shipped configs resolve
"""

import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def run_command(cmd, description):
    """Run command and return result"""
    print(f"Testing {description}...")
    try:
        result = subprocess.run(cmd, capture_output=True, text=True, timeout=120, cwd=ROOT)
        if result.returncode == 0:
            print(f"  PASS: {description}")
            return True
        else:
            print(f"  FAIL: {description}")
            if result.stderr:
                print(f"    Error: {result.stderr[:200]}")
            return False
    except subprocess.TimeoutExpired:
        print(f"  TIMEOUT: {description}")
        return False
    except Exception as e:
        print(f"  ERROR: {description} - {e}")
        return False


def config_checks():
    checks = []
    for path in sorted((ROOT / "configs").glob("*.yaml")):
        if path.name == "augment_replay.yaml":
            continue
        code = (
            "from pathlib import Path; from tyolo.core.run_config import load_run_config; "
            f"load_run_config(Path({str(path)!r}))"
        )
        checks.append(([sys.executable, "-c", code], f"Config {path.name}"))
    return checks


def main():
    """Run quick validation tests"""
    print("Quick TYolo Validation")
    print("=" * 40)

    tests = [
        ([sys.executable, "-c", "import tyolo; print(tyolo.__version__)"], "Package imports"),
        ([sys.executable, "cli.py", "--help"], "CLI help"),
        ([sys.executable, "-c", "from tyolo.utils.system_checker import SystemChecker; "
          "raise SystemExit(0 if SystemChecker().check_all() else 1)"], "System check"),
        *config_checks(),
    ]

    passed = 0
    total = len(tests)

    for cmd, desc in tests:
        if run_command(cmd, desc):
            passed += 1

    print("\n" + "=" * 40)
    print(f"Results: {passed}/{total} tests passed")

    if passed == total:
        print("All quick checks PASSED")
        return 0
    else:
        print("Some checks FAILED")
        return 1


if __name__ == "__main__":
    sys.exit(main())
