import pytest

from multilog import cli

FAST = ["--standalone-epochs", "1", "--ae-epochs", "5", "--meta-epochs", "5", "--beta", "16", "--mu", "8"]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert cli.main(["generate", "--seed", "2", "--duration-s", "450", "--inject-len-s", "20",
                     "--rest-len-s", "25", "--out", str(out)]) == 0
    return out


def test_generate_writes_dataset(dataset, capsys):
    assert (dataset / "labels.csv").exists() and (dataset / "summary.txt").exists()


def test_parse(dataset, tmp_path, capsys):
    out = tmp_path / "reg.txt"
    assert cli.main(["parse", "--data", str(dataset), "--out", str(out)]) == 0
    assert "templates" in capsys.readouterr().out and out.read_text().strip()


def test_train_eval_report(dataset, tmp_path, capsys):
    ckpt, rep = tmp_path / "ckpt", tmp_path / "rep"
    assert cli.main(["train", "--data", str(dataset), "--out", str(ckpt), "--window-ms", "5000",
                     "--group-len", "20", "--split", "0.6"] + FAST) == 0
    assert cli.main(["eval", "--data", str(dataset), "--ckpt", str(ckpt), "--out", str(rep)]) == 0
    out = capsys.readouterr().out
    assert "Single-Point" in out and "Timings" in out
    assert cli.main(["report", str(rep)]) == 0
    assert "Vote-Based" in capsys.readouterr().out


def test_flags_override_config_file(tmp_path):
    conf = tmp_path / "c.txt"
    conf.write_text("# comment\nbeta = 64\nmu=16\ngenerator.scenario = Multi2Single\ngenerator.anomaly_set = 1,2\n")
    args = cli.build_parser().parse_args(["run", "--config", str(conf), "--beta", "8"])
    cfg = cli.build_config(args)
    assert (cfg.beta, cfg.mu, cfg.generator.scenario, cfg.generator.anomaly_set) == (8, 16, "Multi2Single", (1, 2))
    assert cfg.window_ms == 5000 and cfg.group_len == 20 and cfg.split == 0.7


def test_unknown_config_key(tmp_path, capsys):
    conf = tmp_path / "c.txt"
    conf.write_text("nonsense = 1\n")
    assert cli.main(["run", "--config", str(conf)]) == 2
    assert "unknown config key" in capsys.readouterr().err


def test_gradcheck_command(capsys):
    assert cli.main(["gradcheck"]) == 0
    assert "attention" in capsys.readouterr().out


def test_missing_dataset_is_reported(tmp_path, capsys):
    assert cli.main(["parse", "--data", str(tmp_path / "none"), "--out", str(tmp_path / "r")]) == 2
    assert "error" in capsys.readouterr().err
