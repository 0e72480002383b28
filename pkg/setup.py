from setuptools import setup, find_packages

setup(
    name="ionization_lab",
    version="1.0.0",
    packages=find_packages(exclude=["tests", "tests.*"]),
    install_requires=[
        'numpy',
        'scipy',
        'python-dotenv',
        'tqdm',
        'aiofiles'
    ],
    entry_points={
        'console_scripts': [
            'ionization-lab=ionization_lab.cli:main',
        ],
    },
    python_requires='>=3.8',
)
