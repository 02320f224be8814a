from setuptools import setup, find_packages

setup(
    name="phase-hmm",
    version="0.1.0",
    description="Temporal smoothing of surgical phase predictions with Gaussian-emission HMMs",
    author="Phase HMM contributors",
    packages=find_packages(exclude=("tests", "tests.*")),
    python_requires=">=3.8",
    install_requires=[
        "numpy>=1.20.0",
        "pandas>=1.5.0",
        "scikit-learn>=1.0.0",
        "pydantic>=2.0.0",
        "python-dotenv>=0.19.0",
        "joblib>=1.1.0",
    ],
    extras_require={
        "test": ["pytest>=7.0.0"],
    },
    entry_points={
        "console_scripts": [
            "phase-hmm=src.main:main",
        ],
    },
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
    ],
)
