from setuptools import find_packages, setup

setup(
    name="mackrl",
    version="0.1.0",
    description="Multi-agent common knowledge reinforcement learning",
    packages=find_packages(exclude=["tests", "tests.*"]),
    python_requires=">=3.9",
    install_requires=[
        "numpy",
        "scipy",
        "pandas",
        "psutil",
        "pyyaml",
    ],
    extras_require={"test": ["pytest"]},
    entry_points={"console_scripts": ["mackrl=mackrl.cli:main"]},
)
