from setuptools import setup, find_packages

setup(
    name="matchamg-bench",
    version="0.1.0",
    packages=find_packages(exclude=["tests", "tests.*"]),
    install_requires=[
        "numpy>=1.26",
        "scipy>=1.11",
        "langgraph>=0.2.45",
        "reportlab>=4.2.5",
        "python-dotenv>=1.0.1",
        "pydantic>=2.10.3",
        "typing-extensions>=4.12.2",
    ],
    extras_require={
        "test": ["pytest>=8.0", "networkx>=3.2"],
    },
    entry_points={
        "console_scripts": ["matchamg-bench=src.bench:main"],
    },
    python_requires=">=3.10",
)
