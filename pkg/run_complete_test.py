#!/usr/bin/env python3
"""
Complete Test Runner
Checks the environment, writes the sample games and runs every test script in turn
"""

import os
import subprocess
import sys
import time

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

UNIT_TESTS = [
    "test_support_functions.py",
    "test_game_model.py",
    "test_robust_dp.py",
    "test_stage_games.py",
    "test_nash_iteration.py",
    "test_oracles.py",
    "test_experiments.py",
    "test_end_to_end.py",
]
ACCEPTANCE_TEST = "test_complete_pipeline.py"


def check_environment():
    """Report the ROBUSTMG_* settings in effect"""
    print("🔍 Checking environment variables...")
    optional_vars = {
        "ROBUSTMG_TOL": "policy evaluation tolerance",
        "ROBUSTMG_NASH_TOL": "Nash-iteration span tolerance",
        "ROBUSTMG_MAX_ROUNDS": "Nash-iteration round cap",
        "ROBUSTMG_THREADS": "worker threads for the gamma sweep",
        "ROBUSTMG_OUTPUT_DIR": "default output directory",
    }
    for var, description in optional_vars.items():
        value = os.getenv(var)
        print(f"   {var} ({description}): {value if value else 'default'}")
    print("✅ Environment checked")
    return True


def check_dependencies():
    """Check if required Python packages are installed"""
    print("\n📦 Checking Python dependencies...")

    required_packages = {
        "numpy": "numpy",
        "scipy": "scipy",
        "pandas": "pandas",
        "matplotlib": "matplotlib",
        "pydantic": "pydantic",
        "absl": "absl-py",
        "dotenv": "python-dotenv",
    }

    missing_packages = []
    for module, package in required_packages.items():
        try:
            __import__(module)
        except ImportError:
            missing_packages.append(package)

    if missing_packages:
        print("❌ Missing required packages:")
        for package in missing_packages:
            print(f"   - {package}")
        print("\nPlease install missing packages:")
        print(f"pip install {' '.join(missing_packages)}")
        return False

    print("✅ All required packages are installed")
    return True


def write_sample_games():
    """Write the sample game library used by the quick start"""
    print("\n📊 Writing sample games...")
    try:
        result = subprocess.run([sys.executable, "sample_games.py"], capture_output=True, text=True, timeout=60)
        if result.returncode == 0:
            print("✅ Sample games written")
            return True
        print("❌ Failed to write sample games:")
        print(result.stderr)
        return False
    except subprocess.TimeoutExpired:
        print("❌ Sample game generation timed out")
        return False


def run_script(script, timeout):
    print(f"\n🧪 Running {script}...")
    start = time.perf_counter()
    try:
        result = subprocess.run([sys.executable, script], capture_output=False, timeout=timeout)
    except subprocess.TimeoutExpired:
        print(f"❌ {script} timed out after {timeout}s")
        return False
    ok = result.returncode == 0
    print(f"{'✅' if ok else '❌'} {script} ({time.perf_counter() - start:.1f}s)")
    return ok


def main():
    """Main execution flow"""
    print("🚀 Robust Markov Games - Complete Test Runner")
    print("=" * 60)

    if not check_environment():
        return False
    if not check_dependencies():
        print("\n❌ Dependencies check failed. Please install missing packages.")
        return False
    if not write_sample_games():
        return False

    results = [(script, run_script(script, timeout=900)) for script in UNIT_TESTS]
    if "--skip-acceptance" not in sys.argv:
        results.append((ACCEPTANCE_TEST, run_script(ACCEPTANCE_TEST, timeout=3600)))

    print("\n" + "=" * 60)
    for script, ok in results:
        print(f"{script:<32} {'✅ PASS' if ok else '❌ FAIL'}")
    if all(ok for _, ok in results):
        print("\n🎉 SUCCESS! Every test script passed.")
        return True
    print("\n❌ Some test scripts failed. Please check the output above.")
    return False


if __name__ == "__main__":
    success = main()
    sys.exit(0 if success else 1)
