from configparser import ConfigParser
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def read(name: str) -> ConfigParser:
    parser = ConfigParser()
    parser.read(ROOT / name)
    return parser


def test_pytest_collects_coverage():
    assert "--cov" in read("pytest.ini")["pytest"]["addopts"].split()


def test_coverage_measures_every_package():
    sources = read(".coveragerc")["run"]["source"].split()
    assert sources
    for package in sources:
        assert (ROOT / package / "__init__.py").exists(), package
