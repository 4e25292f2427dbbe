"""
NeuroTrain setup.

Benchmark framework for local learning rules in spiking neural networks.
"""

from setuptools import setup, find_packages
from codecs import open
from os import path

here = path.abspath(path.dirname(__file__))

# Read long description from README file
with open(path.join(here, "README.rst"), encoding="utf-8") as f:
    long_description = f.read()

setup(
    name="neurotrain",

    # This project aims to follow semantic versioning (www.semver.org)
    version="0.1.0",

    description="NeuroTrain: benchmarking local learning rules for spiking neural networks",
    long_description=long_description,

    license="BSD",

    classifiers=[
        "Development Status :: 3 - Alpha",
        "Environment :: Console",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: BSD License",
        "Natural Language :: English",
        "Operating System :: POSIX :: Linux",
        "Programming Language :: Python :: 3.9",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
    ],

    keywords="spiking neural networks local learning rules surrogate gradient STDP e-prop benchmark",

    packages=find_packages(exclude=["docs", "tests"]),

    python_requires=">=3.9",

    install_requires=[
        "xlsxwriter",
        "scipy",
        "numpy",
    ],

    extras_require={
        "dev": ["pytest", "twine", "wheel"],
        "docs": ["sphinx", "sphinx-autobuild", "sphinx-rtd-theme"]
    },

    entry_points={
        "console_scripts": [
            "neurotrain = neurotrain.cli:main",
        ]
    }
)
