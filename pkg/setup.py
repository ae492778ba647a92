#!/usr/bin/env python3
"""
Setup script for the tworay-pm package
Installs the library and the tworay-pm command
"""

from pathlib import Path

from setuptools import find_packages, setup

requirements = [
    line.strip()
    for line in Path(__file__).with_name("requirements.txt").read_text().splitlines()
    if line.strip() and not line.startswith(("pytest", "python-lsp", "pylsp"))
]

setup(
    name="tworay-pm",
    version="1.0.0",
    description="Positional modulation array design and BER evaluation under a two-ray channel",
    packages=find_packages(exclude=("tests",)),
    python_requires=">=3.10",
    install_requires=requirements + ['tomli>=1.1; python_version < "3.11"'],
    extras_require={"test": ["pytest>=8.0"]},
    entry_points={"console_scripts": ["tworay-pm = tworay_pm.main:main"]},
)
