"""Config parsing, ablation matrix expansion, and the CLI contract."""

import dataclasses
import json

import pytest

from facediff.ablation import AXES, axis_variants, build_matrix
from facediff.cli import cli_main
from facediff.config import (ConfigError, LM_SIZES, RunConfig, parse_config_text,
                             with_overrides)
from facediff.data import corpus_stats, load_dataset

# config ------------------------------------------------------------------

def test_empty_file_yields_defaults():
    assert parse_config_text("") == RunConfig()


def test_comments_and_blanks_ignored():
    cfg = parse_config_text("# a comment\n\n  mapper_lr = 0.002 \n")
    assert cfg.mapper_lr == 0.002


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config_text("mapper_learning_rate=0.1")


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text("seed=1\nseed=2")


def test_type_mismatches_rejected():
    with pytest.raises(ConfigError):
        parse_config_text("use_sep=yes")
    with pytest.raises(ConfigError):
        parse_config_text("seed=three")
    with pytest.raises(ConfigError):
        parse_config_text("mapper_lr=fast")
    with pytest.raises(ConfigError):
        parse_config_text("just a line")


def test_sep_without_cross_projection_rejected():
    with pytest.raises(ConfigError, match="use_cross_projection"):
        parse_config_text("use_sep=true\nuse_cross_projection=false")


def test_enum_fields_validated():
    for bad in ("strategy=sgd", "tier=verbose", "encoder_kind=resnet",
                "lm_size=tiny", "clip_keep=everything"):
        with pytest.raises(ConfigError):
            parse_config_text(bad)


def test_head_divisibility_checked():
    with pytest.raises(ConfigError, match="heads"):
        parse_config_text("d=30\nn_heads=4")


def test_round_trip_preserves_config():
    cfg = parse_config_text("use_sep=false\nmapper_epochs=7\nmapper_lr=0.0005\n"
                            "strategy=end_to_end\nlm_size=large\ndataset=x.jsonl")
    again = parse_config_text(cfg.to_text())
    assert again == cfg


def test_lm_size_presets_override_shape():
    for name, (d, layers, heads) in LM_SIZES.items():
        cfg = parse_config_text(f"lm_size={name}\nd=999\ndecoder_layers=1\nn_heads=1")
        dims = cfg.model_dims()
        assert (dims.d, dims.decoder_layers, dims.n_heads) == (d, layers, heads)


def test_stage_defaults_carry_paper_rates():
    unimodal, mapper, finetune = RunConfig().stage_configs()
    assert mapper.lr == 1e-4
    assert finetune.lr == 1e-5
    assert finetune.warmup_steps == 100
    assert unimodal.stage == "unimodal"


def test_with_overrides_validates():
    cfg = RunConfig()
    assert with_overrides(cfg, seed=9).seed == 9
    with pytest.raises(ConfigError):
        with_overrides(cfg, learning_rate=0.1)
    with pytest.raises(ConfigError):
        with_overrides(cfg, use_cross_projection=False)  # sep still on


# ablation matrix ----------------------------------------------------------

def test_sep_axis_expands_to_two_rows():
    rows = axis_variants(RunConfig(), "sep")
    assert [name for name, _ in rows] == ["with_sep", "without_sep"]
    assert rows[0][1].use_sep and not rows[1][1].use_sep


def test_decoder_layers_axis_sweeps_table():
    rows = axis_variants(RunConfig(), "decoder_layers")
    assert [name for name, _ in rows] == [
        "decoder_layers_2", "decoder_layers_4", "decoder_layers_8",
        "decoder_layers_16"]
    assert [cfg.decoder_layers for _, cfg in rows] == [2, 4, 8, 16]


def test_cross_projection_axis_couples_sep_off():
    rows = dict(axis_variants(RunConfig(), "cross_projection"))
    off = rows["without_cross_projection"]
    assert not off.use_cross_projection and not off.use_sep


def test_variants_differ_only_in_declared_axis():
    base = RunConfig()
    touched_by = {
        "sep": {"use_sep", "use_cross_projection"},
        "text_projection": {"use_text_projection"},
        "encoder": {"encoder_kind"},
        "decoder_layers": {"decoder_layers", "lm_size"},
        "strategy": {"strategy"},
        "lm_size": {"lm_size"},
    }
    for axis, allowed in touched_by.items():
        for _, cfg in axis_variants(base, axis):
            diff = {f.name for f in dataclasses.fields(RunConfig)
                    if getattr(cfg, f.name) != getattr(base, f.name)}
            assert diff <= allowed, (axis, diff)


def test_build_matrix_unique_names_in_order():
    rows = build_matrix(RunConfig(), ["sep", "decoder_layers"])
    names = [name for name, _ in rows]
    assert names == ["with_sep", "without_sep", "decoder_layers_2",
                     "decoder_layers_4", "decoder_layers_8", "decoder_layers_16"]
    assert len(set(names)) == len(names)


def test_unknown_axis_rejected():
    with pytest.raises(ConfigError, match="unknown ablation axis"):
        build_matrix(RunConfig(), ["sep", "dropout"])
    with pytest.raises(ConfigError):
        build_matrix(RunConfig(), [])


def test_full_axis_list_is_documented():
    assert AXES == ("sep", "cross_projection", "text_projection", "encoder",
                    "decoder_layers", "strategy", "lm_size")


# CLI ----------------------------------------------------------------------

TINY_CFG = """h=16
s=2
c=2
d=16
n_heads=2
decoder_layers=1
max_text_len=80
unimodal_epochs=1
mapper_epochs=1
finetune_epochs=1
mapper_lr=1e-3
unimodal_batch_size=8
mapper_batch_size=8
finetune_batch_size=8
finetune_warmup_steps=2
"""


def _gen(tmp_path, name="data.jsonl", pairs=10, seed=3):
    path = tmp_path / name
    rc = cli_main(["gen-data", "--out", str(path), "--pairs", str(pairs),
                   "--identities", "4", "--seed", str(seed)])
    assert rc == 0
    return path


def test_cli_usage_errors_exit_1(capsys):
    assert cli_main(["frobnicate"]) == 1
    assert cli_main(["gen-data"]) == 1  # --out is required
    assert cli_main([]) == 1
    capsys.readouterr()


def test_cli_help_exits_0(capsys):
    assert cli_main(["--help"]) == 0
    capsys.readouterr()


def test_cli_gen_data_deterministic(tmp_path, capsys):
    a = _gen(tmp_path, "a.jsonl")
    b = _gen(tmp_path, "b.jsonl")
    assert a.read_bytes() == b.read_bytes()
    records, header = load_dataset(str(a))
    assert len(records) == 10 and header["seed"] == 3
    capsys.readouterr()


def test_cli_stats_matches_library(tmp_path, capsys):
    data = _gen(tmp_path)
    assert cli_main(["stats", "--data", str(data)]) == 0
    payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    records, _ = load_dataset(str(data))
    st = corpus_stats([r.concise for r in records])
    assert payload["concise"] == {"average": st.average, "median": st.median,
                                  "max": st.max, "vocab": st.vocab}
    assert payload["n_pairs"] == len(records)


def test_cli_config_error_exits_2(tmp_path, capsys):
    data = _gen(tmp_path)
    bad = tmp_path / "bad.cfg"
    bad.write_text("use_sep=true\nuse_cross_projection=false\n")
    assert cli_main(["train", "--data", str(data), "--config", str(bad)]) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_runtime_error_exits_3(tmp_path, capsys):
    assert cli_main(["stats", "--data", str(tmp_path / "nope.jsonl")]) == 3
    assert "error" in capsys.readouterr().err


def test_cli_train_eval_cycle(tmp_path, capsys):
    data = _gen(tmp_path)
    cfg = tmp_path / "run.cfg"
    cfg.write_text(TINY_CFG)
    out = tmp_path / "run"
    rc = cli_main(["train", "--data", str(data), "--config", str(cfg),
                   "--out", str(out), "--seed", "5"])
    assert rc == 0
    for name in ("model.ckpt", "vocab.txt", "train.log", "report.csv",
                 "config.txt"):
        assert (out / name).exists(), name
    log_lines = [json.loads(line) for line in
                 (out / "train.log").read_text().splitlines()]
    assert [rec["stage"] for rec in log_lines] == ["unimodal", "mapper", "finetune"]
    rc = cli_main(["eval", "--data", str(data), "--checkpoint",
                   str(out / "model.ckpt"), "--config", str(cfg),
                   "--out", str(tmp_path / "ev")])
    assert rc == 0
    report = (tmp_path / "ev" / "report.csv").read_text().splitlines()
    assert report[0].startswith("config,") and report[1].startswith("eval,")
    capsys.readouterr()


def test_cli_train_deterministic(tmp_path, capsys):
    data = _gen(tmp_path)
    cfg = tmp_path / "run.cfg"
    cfg.write_text(TINY_CFG)
    blobs = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        assert cli_main(["train", "--data", str(data), "--config", str(cfg),
                         "--out", str(out), "--seed", "5"]) == 0
        blobs.append({f: (out / f).read_bytes()
                      for f in ("model.ckpt", "train.log", "report.csv",
                                "vocab.txt")})
    assert blobs[0] == blobs[1]
    capsys.readouterr()


def test_cli_ablate_single_axis(tmp_path, capsys):
    data = _gen(tmp_path, pairs=8)
    cfg = tmp_path / "run.cfg"
    cfg.write_text(TINY_CFG)
    out = tmp_path / "ab"
    rc = cli_main(["ablate", "--data", str(data), "--config", str(cfg),
                   "--axes", "sep", "--out", str(out)])
    assert rc == 0
    lines = (out / "report.csv").read_text().splitlines()
    assert len(lines) == 3
    assert lines[1].startswith("with_sep,")
    assert lines[2].startswith("without_sep,")
    capsys.readouterr()


def test_cli_gradcheck_quick(capsys):
    assert cli_main(["gradcheck", "--quick"]) == 0
    out = capsys.readouterr().out
    assert "gelu: ok" in out and "checks passed" in out
