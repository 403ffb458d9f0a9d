import os
import pathlib
import subprocess

import pytest

import refgame

CLI = os.environ.get("REFGAME_CLI", str(pathlib.Path(__file__).resolve().parents[2] / "build" / "refgame"))


def run_cli(*args):
    subprocess.run([CLI, *map(str, args)], check=True, stdout=subprocess.DEVNULL)


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    refgame.generate_dataset(out, train=40, val=6, test=10, seed=5)
    return out


@pytest.fixture(scope="session")
def models(dataset_dir, tmp_path_factory):
    if not pathlib.Path(CLI).exists():
        pytest.skip("command line tool not built")
    root = tmp_path_factory.mktemp("models")
    run_cli("train-listener", "--data", dataset_dir, "--epochs", 1, "--seed", 1, "--out", root / "sl")
    run_cli("train-speaker", "--data", dataset_dir, "--kind", "discerning", "--epochs", 1, "--seed", 2,
            "--out", root / "ds")
    return root
