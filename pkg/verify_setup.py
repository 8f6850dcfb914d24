"""
Project Setup Verification Script

Run this script to verify that your environment is correctly set up
and all dependencies are properly installed.

Usage:
    python verify_setup.py
"""

import sys
from pathlib import Path

print("=" * 70)
print("ECG Time/Frequency Study - Setup Verification")
print("=" * 70)

# Check Python version
print("\n[1/6] Checking Python version...")
required_version = (3, 10)
current_version = sys.version_info[:2]

if current_version >= required_version:
    print(f"✓ Python {current_version[0]}.{current_version[1]} (meets requirement >= 3.10)")
else:
    print(f"✗ Python {current_version[0]}.{current_version[1]} (requires >= 3.10)")
    sys.exit(1)

# Check required files
print("\n[2/6] Checking required files...")
base_dir = Path(__file__).parent
required_files = [
    "requirements.txt",
    "README.md",
    "DESIGN.md",
    "fetch_data.py",
    "src/config.py",
    "src/wfdb.py",
    "src/dsp.py",
    "src/dataset.py",
    "src/data_ingest.py",
    "src/tensor.py",
    "src/fanlayers.py",
    "src/models.py",
    "src/modeling.py",
    "src/evaluation.py",
    "src/reporting.py",
    "src/cli.py",
]

missing_files = []
for file_name in required_files:
    if (base_dir / file_name).exists():
        print(f"✓ {file_name}")
    else:
        print(f"✗ {file_name} (missing)")
        missing_files.append(file_name)

# Check Python packages
print("\n[3/6] Checking Python packages...")
required_packages = {
    "numpy": "numpy",
    "scipy": "scipy",
    "pandas": "pandas",
    "scikit-learn": "sklearn",
    "matplotlib": "matplotlib",
    "seaborn": "seaborn",
    "joblib": "joblib",
    "tqdm": "tqdm",
    "requests": "requests",
    "python-dotenv": "dotenv",
    "pytest": "pytest",
}

missing_packages = []
for package, module in required_packages.items():
    try:
        __import__(module)
        print(f"✓ {package}")
    except ImportError:
        print(f"✗ {package} (not installed)")
        missing_packages.append(package)

if missing_packages:
    print(f"\n⚠ Missing packages: {', '.join(missing_packages)}")
    print("   Run: pip install -r requirements.txt")

# Optional oracle used by the WFDB parser tests
print("\n[4/6] Checking optional packages...")
try:
    __import__("wfdb")
    print("✓ wfdb (reference reader for parser tests)")
except ImportError:
    print("⚠ wfdb (optional, parser oracle tests will be skipped)")

# Check data
print("\n[5/6] Checking PhysioNet data...")
sys.path.insert(0, str(base_dir))
try:
    from src.config import DATA_DIR, TASKS

    for task, settings in TASKS.items():
        database_dir = DATA_DIR / settings["database"]
        if database_dir.exists():
            print(f"✓ {task}: {database_dir}")
        else:
            print(f"⚠ {task}: {database_dir} not found (run: python fetch_data.py --task {task})")
except Exception as e:
    print(f"✗ Error importing src.config: {e}")

# Summary
print("\n[6/6] Verification Summary")
print("=" * 70)

if not missing_files and not missing_packages:
    print("✓ Setup verification PASSED")
    print("\nNext steps:")
    print("  1. python fetch_data.py --task mitbih")
    print("  2. python -m src.cli prepare --task mitbih")
    print("  3. python -m src.cli crossval --task mitbih --arch cnn1d --arch cfan")
    print("  4. python -m src.cli report")
else:
    print("⚠ Setup verification found issues")
    print("\nPlease address the items marked with ✗ above")

print("=" * 70)
