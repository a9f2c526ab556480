#!/usr/bin/env python3

from pathlib import Path

from setuptools import setup, find_packages

version = (Path(__file__).parent / "hblab/support/VERSION").read_text().strip()

setup(
    name="hblab",
    version=version,
    description="Local entropy, reverse-time stochastic control and Schrödinger half-bridge laboratory",
    packages=find_packages(include=["hblab*"]),
    package_data={
        "hblab": [
            "support/config.schema.yml",
            "support/VERSION",
        ]
    },
    python_requires=">=3.9",
    install_requires=open("requirements.txt").readlines(),
    extras_require={"test": open("dev_requirements.txt").readlines()},
    entry_points={
        "console_scripts": [
            "hblab=hblab:main",
            "hbl=hblab:main",
        ]
    },
    zip_safe=False,
)
