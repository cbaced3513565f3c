import pytest

from protostream.config import (
    ConfigError,
    RunConfig,
    build_stream_config,
    config_hash,
    parse_config,
    render_config,
)


def test_defaults_carry_paper_hyperparameters():
    cfg = parse_config(None)
    assert cfg.hyperparams.alpha == 4.0
    assert cfg.hyperparams.t_c == 0.1
    assert cfg.hyperparams.t_o == 0.6
    assert cfg.hyperparams.t_p == 0.7
    assert cfg.hyperparams.lr == pytest.approx(8e-3)


def test_render_contains_defaults_and_reparses():
    cfg = parse_config(None)
    text = render_config(cfg)
    assert "alpha = 4.0" in text
    assert "t_c = 0.1" in text
    assert "t_o = 0.6" in text
    assert "t_p = 0.7" in text
    for section in ("stream", "hyperparams", "clustering", "danet", "trainer", "eval", "run"):
        assert f"[{section}]" in text


def test_roundtrip_through_file(tmp_path):
    cfg = parse_config(None)
    cfg.hyperparams.alpha = 2.5
    cfg.stream.seen_domains = 3
    path = tmp_path / "c.ini"
    path.write_text(render_config(cfg))
    back = parse_config(path)
    assert back.hyperparams.alpha == 2.5
    assert back.stream.seen_domains == 3
    assert config_hash(back) == config_hash(cfg)


def test_file_overrides_defaults(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[hyperparams]\nalpha = 1.0\n\n[run]\nseed = 9\n")
    cfg = parse_config(path)
    assert cfg.hyperparams.alpha == 1.0
    assert cfg.seed == 9
    assert cfg.hyperparams.t_p == 0.7  # untouched default


def test_unknown_section_rejected(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[nonsense]\nx = 1\n")
    with pytest.raises(ConfigError, match="nonsense"):
        parse_config(path)


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[hyperparams]\nalphq = 1.0\n")
    with pytest.raises(ConfigError, match="alphq"):
        parse_config(path)


def test_bad_value_names_key(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[hyperparams]\nalpha = banana\n")
    with pytest.raises(ConfigError, match="alpha"):
        parse_config(path)


def test_invalid_threshold_rejected(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[hyperparams]\nt_p = 1.5\n")
    with pytest.raises(ConfigError, match="t_p"):
        parse_config(path)


def test_missing_file():
    with pytest.raises(ConfigError, match="not found"):
        parse_config("/nonexistent/config.ini")


def test_overrides_win_over_file(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[run]\nseed = 3\n")
    cfg = parse_config(path, overrides={"run": {"seed": "17"}})
    assert cfg.seed == 17


def test_build_stream_config_deterministic():
    cfg = RunConfig()
    cfg.seed = 5
    a = build_stream_config(cfg)
    b = build_stream_config(cfg)
    assert len(a.seen_domains) == cfg.stream.seen_domains
    assert len(a.unseen_domains) == cfg.stream.unseen_domains
    for da, db in zip(a.seen_domains, b.seen_domains):
        assert (da.channel_means == db.channel_means).all()
        assert (da.channel_stds == db.channel_stds).all()


def test_bool_parsing(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[trainer]\nuse_danet = false\ndebug_dump = on\n")
    cfg = parse_config(path)
    assert cfg.trainer.use_danet is False
    assert cfg.trainer.debug_dump is True
