import sys

from setuptools import find_packages, setup

# package requirements
if sys.version_info[:2] < (3, 7):
    raise RuntimeError("Python version >= 3.7 required.")
with open("requirements.txt", "r") as f:
    requirements = f.read().splitlines()

with open("README.md", "r") as f:
    long_description = f.read()

setup(
    name="gnnprint",
    packages=find_packages(exclude=["test", "test.unit", "test.integration"]),
    include_package_data=True,
    version="0.1.0",
    license="apache-2.0",
    description="Fingerprinting of graph neural network embedding models "
    "with stationary query tuples, and evaluation of surrogate detection.",
    long_description=long_description,
    long_description_content_type="text/markdown",
    author="gnnprint developers",
    url="",
    download_url="",
    keywords=[
        "Graph Neural Networks",
        "Model Fingerprinting",
        "Model Extraction",
        "Ownership Verification",
    ],
    zip_safe=False,
    install_requires=requirements,
    entry_points={"console_scripts": ["gnnprint=gnnprint.cli:main"]},
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Environment :: Console",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: Apache Software License",
        "Natural Language :: English",
        "Operating System :: Unix",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.7",
        "Programming Language :: Python :: 3.8",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
        "Topic :: Security",
    ],
)
