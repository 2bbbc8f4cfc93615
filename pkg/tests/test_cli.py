
import numpy as np
import pytest

from csrqa import cli, dataio, model
from csrqa.config import RunConfig
from csrqa.features import build_idf

SMALL = ["--embed-dim", "6", "--conv-blocks", "3:8", "--hidden-dim", "8",
         "--max-len-q", "40", "--max-len-a", "80", "--batch-size", "8"]


@pytest.fixture
def corpus(tmp_path):
    out = tmp_path / "data"
    assert cli.main(["synth", "--out", str(out), "--questions", "8", "--answers", "4"]) == 0
    return out


def test_alphabet_dump(capsys):
    assert cli.main(["alphabet", "dump"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 71
    assert lines[:3] == ["<pad>", "a", "b"] and lines[-1] == "<unk>"


def test_alphabet_dump_to_file(tmp_path):
    path = tmp_path / "alpha.tsv"
    assert cli.main(["alphabet", "dump", "--out", str(path)]) == 0
    assert len(path.read_text().splitlines()) == 71


def test_usage_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["train", "--train", "x"])
    assert exc.value.code == 1


def test_bad_config_value_exit_1(corpus, tmp_path, capsys):
    rc = cli.main(["train", "--train", str(corpus / "train.tsv"), "--dev", str(corpus / "dev.tsv"),
                   "--out", str(tmp_path / "o"), "--embed-dim", "-3"])
    assert rc == 1


def test_missing_file_exit_2(tmp_path, capsys):
    missing = tmp_path / "nope.tsv"
    rc = cli.main(["train", "--train", str(missing), "--dev", str(missing), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert str(missing) in capsys.readouterr().err


def test_eval_missing_checkpoint_exit_2(corpus, tmp_path, capsys):
    rc = cli.main(["eval", "--checkpoint", str(tmp_path / "m.npz"), "--test", str(corpus / "test.tsv"),
                   "--out", str(tmp_path)])
    assert rc == 2


def test_malformed_tsv_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.tsv"
    bad.write_text("q1\ta1\tquestion\n")
    rc = cli.main(["prepare", "--train", str(bad), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "bad.tsv" in capsys.readouterr().err


def test_prepare_unchecked(corpus, tmp_path, capsys):
    rc = cli.main(["prepare", "--train", str(corpus / "train.tsv"), "--out", str(tmp_path / "o")])
    assert rc == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith("train\t8 32 ") and line.endswith("\tunchecked")
    assert (tmp_path / "o" / "train.tsv").read_bytes() == (corpus / "train.tsv").read_bytes()


def test_prepare_mismatch_exit_3(corpus, tmp_path, capsys):
    rc = cli.main(["prepare", "--dataset", "trecqa", "--train", str(corpus / "train.tsv"), "--out", str(tmp_path / "o")])
    assert rc == 3
    captured = capsys.readouterr()
    assert "MISMATCH" in captured.out and "94" in captured.err


def test_prepare_no_verify(corpus, tmp_path, capsys):
    rc = cli.main(["prepare", "--dataset", "trecqa", "--no-verify", "--train", str(corpus / "train.tsv"),
                   "--out", str(tmp_path / "o")])
    assert rc == 0


def test_gradcheck_passes(capsys):
    assert cli.main(["gradcheck"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_eval_zero_model_scores_half(corpus, tmp_path, capsys):
    cfg = RunConfig(embed_dim=4, conv_blocks=[(3, 4)], hidden_dim=4, max_len_q=40, max_len_a=80)
    train_pairs = dataio.load_pairs(corpus / "train.tsv")
    ckpt = tmp_path / "zero.npz"
    model.save_checkpoint(ckpt, model.zero_model(cfg), extra={"idf": build_idf(train_pairs).to_dict()})
    rc = cli.main(["eval", "--checkpoint", str(ckpt), "--test", str(corpus / "test.tsv"), "--out", str(tmp_path)])
    assert rc == 0
    test_pairs = dataio.load_pairs(corpus / "test.tsv")
    lines = (tmp_path / "test.run").read_text().splitlines()
    assert [l.split()[2] for l in lines] == [p.aid for p in test_pairs]
    assert {l.split()[4] for l in lines} == {"0.500000"}
    assert (tmp_path / "test.qrels").read_text().count("\n") == len(test_pairs)


def test_config_file_and_flag_precedence(corpus, tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# small model\nembed_dim = 6\nhidden_dim = 7\nconv_blocks = 3:8\n")
    args = cli.build_parser().parse_args(
        ["train", "--train", "t", "--dev", "d", "--out", "o", "--config", str(conf), "--hidden-dim", "9",
         "--dataset", "wikiqa", "--lambda", "0.001"]
    )
    cfg = cli.resolve_config(args)
    assert (cfg.embed_dim, cfg.hidden_dim, cfg.conv_blocks, cfg.lam) == (6, 9, [(3, 8)], 0.001)
    assert (cfg.max_len_q, cfg.max_len_a) == (125, 386)


def test_train_writes_artifacts(corpus, tmp_path, capsys):
    out = tmp_path / "run"
    rc = cli.main(["train", "--train", str(corpus / "train.tsv"), "--dev", str(corpus / "dev.tsv"),
                   "--test", str(corpus / "test.tsv"), "--out", str(out), "--max-epochs", "2", *SMALL])
    assert rc == 0
    for name in ("train.log", "model.npz", "idf.tsv", "config.txt", "test.run", "test.qrels"):
        assert (out / name).exists(), name
    log = (out / "train.log").read_text().splitlines()
    assert log[0].startswith("epoch 1 loss ") and log[-1].startswith("best_epoch ")
    # evaluating the checkpoint again reproduces the run file
    rc = cli.main(["eval", "--checkpoint", str(out / "model.npz"), "--test", str(corpus / "test.tsv"),
                   "--out", str(tmp_path / "again")])
    assert rc == 0
    assert (tmp_path / "again" / "test.run").read_bytes() == (out / "test.run").read_bytes()


def test_experiment_report(corpus, tmp_path, capsys):
    out = tmp_path / "exp"
    rc = cli.main(["experiment", "--train", str(corpus / "train.tsv"), "--dev", str(corpus / "dev.tsv"),
                   "--test", str(corpus / "test.tsv"), "--out", str(out), "--seeds", "3", "--quiet",
                   "--max-epochs", "1", *SMALL])
    assert rc == 0
    rows = [l.split("\t") for l in (out / "report.tsv").read_text().splitlines()]
    assert rows[0] == ["seed", "map", "mrr"]
    assert [r[0] for r in rows[1:]] == ["0", "1", "2", "mean", "variance", "std", "reported"]
    maps = np.array([float(r[1]) for r in rows[1:4]])
    assert float(rows[4][1]) == pytest.approx(maps.mean(), abs=1e-6)
    assert float(rows[6][1]) == pytest.approx(maps.std(ddof=1), abs=1e-6)
    assert "±" in rows[7][1]
    for seed in range(3):
        assert (out / f"seed{seed}" / "test.run").exists()


def test_format_pm():
    assert cli.format_pm(0.7295, 0.0036) == ".7295 ± .0036"
    assert cli.format_pm(1.0, 0.0) == "1.0000 ± .0000"


def test_aggregate_single_seed():
    agg = cli.aggregate([(0, 0.5, 0.6)])
    assert agg["map"] == (0.5, 0.0, 0.0)
