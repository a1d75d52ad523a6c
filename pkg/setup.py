import setuptools

with open("README.md", "r") as fh:
    long_description = fh.read()

setuptools.setup(
    name="vodcache",
    version="0.1.0",
    author="vodcache developers",
    description="Trace-driven simulation of video-on-demand proxy cache replacement",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=setuptools.find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    install_requires=[
        'pillow>=6.2.0',
        'numpy>=1.18.1',
        'aggdraw>=1.3.11',
        'scipy>=1.5.0',
        'tomli>=1.1.0; python_version < "3.11"',
    ],
    extras_require={
        'test': ['pytest>=6.0'],
    },
    entry_points={
        'console_scripts': ['vodcache = vodcache.cli:main'],
    },
    python_requires='>=3.8',
)
