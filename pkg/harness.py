"""
Runner shared by the test scripts: runs each test function, prints a
numbered PASS/FAIL summary and returns a process exit code.
"""

import time
import traceback
from typing import Callable, Sequence


def run_suite(title: str, tests: Sequence[Callable[[], None]]) -> int:
    print(f"🚀 Starting {title}")
    print("=" * 50)

    results = []
    for test in tests:
        name = test.__name__.replace("test_", "").replace("_", " ")
        print(f"\n🔍 Testing {name}...")
        start = time.perf_counter()
        try:
            test()
            results.append(True)
            print(f"✅ {name} ({time.perf_counter() - start:.2f}s)")
        except AssertionError as e:
            print(f"❌ {name}: {e or 'assertion failed'}")
            traceback.print_exc()
            results.append(False)
        except Exception as e:
            print(f"❌ {name} raised {type(e).__name__}: {e}")
            traceback.print_exc()
            results.append(False)

    print("\n" + "=" * 50)
    print("📊 Test Results Summary")
    print("=" * 50)
    for i, (test, ok) in enumerate(zip(tests, results)):
        status = "✅ PASS" if ok else "❌ FAIL"
        name = test.__name__.replace("test_", "").replace("_", " ").title()
        print(f"{i + 1:2d}. {name:<45} {status}")

    passed, total = sum(results), len(results)
    print(f"\nOverall: {passed}/{total} tests passed")
    if passed == total:
        print("🎉 All tests passed!")
    else:
        print("⚠️  Some tests failed. Check the errors above.")
    return 0 if passed == total else 1
