import sys

assert sys.version_info.major >= 3 and sys.version_info.minor >= 7, "qdcert requires Python 3.7 or greater"

import re
from pathlib import Path

import setuptools

SOURCE_DIR = "python"


def read_version():
    init = Path(__file__).parent / SOURCE_DIR / "qdcert" / "__init__.py"
    return re.search(r'^__version__ = "([^"]+)"', init.read_text(), re.MULTILINE).group(1)


def package_setup():
    # Following PEP-518, use pyproject.toml instead of setup(setup_requires=...) to
    # specify setup dependencies.
    setuptools.setup(
        name="qdcert",
        version=read_version(),
        description="Positivity certificates and overlap decisions for unions of planar disks",
        license="BSD",
        package_dir={"": SOURCE_DIR},
        packages=setuptools.find_packages(where=SOURCE_DIR, exclude=["test", "test.*"]),
        python_requires=">=3.7",
        install_requires=["numpy", "scipy", "numba>=0.50,<1.0a0", "pyarrow"],
        extras_require={"test": ["pytest", "hypothesis"]},
        entry_points={"console_scripts": ["qdcert=qdcert.cli:main"]},
    )


if __name__ == "__main__":
    package_setup()
