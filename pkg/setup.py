from io import open

from setuptools import setup

from tcpgen_biasing import __version__ as version

setup(
    name="tcpgen-biasing",
    version=version,
    license="MIT",
    description="Tree-constrained pointer generator with tree-RNN encodings for contextual speech recognition biasing.",
    long_description="".join(open("README.md", encoding="utf-8").readlines()),
    long_description_content_type="text/markdown",
    keywords=["speech recognition", "contextual biasing", "pointer generator", "prefix tree"],
    packages=["tcpgen_biasing"],
    include_package_data=True,
    install_requires=["numpy>=1.22"],
    python_requires=">=3.8",
    classifiers=[
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Programming Language :: Python :: 3.13",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
    ],
    entry_points={
        "console_scripts": ["tcpgen=tcpgen_biasing.__main__:run", "tcpgen-biasing=tcpgen_biasing.__main__:run"],
    },
)
