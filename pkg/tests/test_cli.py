"""Config parsing, CSV output, and command-line entry points."""

import math

import numpy as np
import pytest

from bellqkd.cli import (
    CSV_COLUMNS,
    EXIT_CONFIG,
    EXIT_INSECURE,
    EXIT_OK,
    EXIT_TRANSPORT,
    ParseError,
    RangeError,
    format_csv,
    keyrate_estimate,
    main,
    parse_config,
)
from bellqkd.protocol import BlockStats
from bellqkd.timetag import read_tag_file, write_tag_file

# ---------------------------------------------------------------------------
# Config parsing


def test_empty_config_gives_defaults():
    cfg = parse_config("")
    assert cfg.channel.pair_rate == 18000.0
    assert cfg.channel.rng_seed == 1
    assert cfg.attack.intercept_fraction == 0.0
    assert cfg.block_min_key_bits == 10000
    assert cfg.transport == "inproc"
    assert cfg.csv is None


def test_parse_assignments_and_comments():
    cfg = parse_config(
        "# source\n"
        "pair_rate = 25000\n"
        "\n"
        "loss_db_bob = 2.5  # fibre spool\n"
        "rng_seed = 42\n"
        "intercept_fraction = 0.1\n"
        "block_min_key_bits = 5000\n"
        "transport = socket 127.0.0.1:9000\n"
    )
    assert cfg.channel.pair_rate == 25000.0
    assert cfg.channel.loss_db_bob == 2.5
    assert cfg.channel.rng_seed == 42
    assert cfg.attack.intercept_fraction == 0.1
    assert cfg.block_min_key_bits == 5000
    assert cfg.transport == "socket 127.0.0.1:9000"


@pytest.mark.parametrize("text, lineno, needle", [
    ("pair_rate 9000", 1, "key = value"),
    ("= 3", 1, "missing key"),
    ("pair_rate =", 1, "missing value"),
    ("\nwavelength = 810", 2, "unknown key"),
    ("rng_seed = 1\nrng_seed = 2", 2, "duplicate"),
    ("pair_rate = fast", 1, "bad float"),
    ("rng_seed = 1.5", 1, "bad int"),
])
def test_parse_errors_carry_line_numbers(text, lineno, needle):
    with pytest.raises(ParseError) as exc:
        parse_config(text)
    assert exc.value.line == lineno
    assert needle in str(exc.value)


@pytest.mark.parametrize("text, field", [
    ("pair_rate = -5", "pair_rate"),
    ("visibility_hv = 1.5", "visibility_hv"),
    ("intercept_fraction = 2", "intercept_fraction"),
    ("rng_seed = -1", "rng_seed"),
    ("block_min_key_bits = 0", "block_min_key_bits"),
    ("segment_seconds = 0", "segment_seconds"),
    ("finite_deduction = -3", "finite_deduction"),
    ("rate_multiplier = 0", "rate_multiplier"),
    ("rate_multiplier = 1.2", "rate_multiplier"),
    ("transport = pigeon", "transport"),
    ("transport = socket 1.2.3.4:70000", "transport"),
    ("transport = socket nocolon", "transport"),
    ("transport = inproc 127.0.0.1:1", "transport"),
])
def test_range_errors_name_the_field(text, field):
    with pytest.raises(RangeError) as exc:
        parse_config(text)
    assert exc.value.field == field


# ---------------------------------------------------------------------------
# CSV


def test_csv_roundtrips_floats_exactly():
    stats = BlockStats(2, 1.0, 3.5, 1234, 17, 0.0314159, -2.4987654321,
                       0.0123456789, 1762, 0.5435644431995964, 2802)
    text = format_csv([stats])
    lines = text.strip().split("\n")
    assert lines[0] == ",".join(CSV_COLUMNS)
    fields = lines[1].split(",")
    assert int(fields[0]) == 2
    assert float(fields[4]) == stats.qber
    assert float(fields[5]) == stats.s_value
    assert float(fields[8]) == stats.i_eve
    assert int(fields[9]) == stats.final_bits
    # rate columns are count / duration
    assert float(fields[2]) == stats.coincidence_count / 2.5
    assert float(fields[10]) == stats.final_bits / 2.5


# ---------------------------------------------------------------------------
# keyrate estimator


def test_keyrate_frozen_operating_point():
    est = keyrate_estimate(2.5, 0.02, 10000)
    assert est.leak_ec == 1762
    assert est.final_length == 2802
    assert abs(est.i_eve - 0.5435644431995964) < 1e-12


def test_keyrate_validation():
    with pytest.raises(RangeError):
        keyrate_estimate(2.5, 0.02, 0)
    with pytest.raises(RangeError):
        keyrate_estimate(2.5, 0.7, 1000)


def test_keyrate_command(capsys):
    assert main(["keyrate", "--s", "2.5", "--qber", "0.02", "--n", "10000"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "final_length    2802" in out
    assert "leak_ec_bits    1762" in out


def test_keyrate_command_insecure(capsys):
    assert main(["keyrate", "--s", "1.9", "--qber", "0.02", "--n", "10000"]) == EXIT_INSECURE
    assert "insecure" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# full command-line runs

_FAST_CONFIG = """
pair_rate = 20000
background_rate = 1000
visibility_hv = 0.96
visibility_diag = 0.92
duration = 2
bob_delay = 500
rng_seed = 7
block_min_key_bits = 3000
"""


@pytest.fixture()
def config_file(tmp_path):
    path = tmp_path / "exp.conf"
    path.write_text(_FAST_CONFIG)
    return path


def test_run_writes_csv_and_matching_keys(config_file, tmp_path, capsys):
    csv_path = tmp_path / "blocks.csv"
    keys_dir = tmp_path / "keys"
    code = main(["run", "--config", str(config_file),
                 "--csv", str(csv_path), "--keys", str(keys_dir)])
    assert code == EXIT_OK
    assert "blocks" in capsys.readouterr().out

    lines = csv_path.read_text().strip().split("\n")
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) >= 2
    alice_key = (keys_dir / "alice.key").read_bytes()
    bob_key = (keys_dir / "bob.key").read_bytes()
    assert len(alice_key) > 0
    assert alice_key == bob_key


def test_run_is_deterministic(config_file, capsys):
    outputs = []
    for _ in range(2):
        assert main(["run", "--config", str(config_file)]) == EXIT_OK
        outputs.append(capsys.readouterr().out)
    assert outputs[0] == outputs[1]


def test_seed_override_changes_output(config_file, capsys):
    assert main(["run", "--config", str(config_file), "--seed", "8"]) == EXIT_OK
    seed8 = capsys.readouterr().out
    assert main(["run", "--config", str(config_file)]) == EXIT_OK
    seed7 = capsys.readouterr().out
    assert seed8 != seed7


def test_replay_reproduces_run(config_file, tmp_path, capsys):
    tags_dir = tmp_path / "tags"
    csv_live = tmp_path / "live.csv"
    keys_live = tmp_path / "keys_live"
    code = main(["run", "--config", str(config_file), "--csv", str(csv_live),
                 "--keys", str(keys_live), "--dump-tags", str(tags_dir)])
    assert code == EXIT_OK
    capsys.readouterr()

    csv_replay = tmp_path / "replay.csv"
    keys_replay = tmp_path / "keys_replay"
    code = main(["replay", "--alice", str(tags_dir / "alice.tags"),
                 "--bob", str(tags_dir / "bob.tags"),
                 "--config", str(config_file),
                 "--csv", str(csv_replay), "--keys", str(keys_replay)])
    assert code == EXIT_OK
    assert csv_replay.read_bytes() == csv_live.read_bytes()
    assert ((keys_replay / "alice.key").read_bytes()
            == (keys_live / "alice.key").read_bytes())
    assert ((keys_replay / "bob.key").read_bytes()
            == (keys_live / "bob.key").read_bytes())


def test_replay_shifted_recording_fails_cleanly(config_file, tmp_path, capsys):
    tags_dir = tmp_path / "tags"
    assert main(["run", "--config", str(config_file),
                 "--dump-tags", str(tags_dir)]) == EXIT_OK
    capsys.readouterr()

    # push Bob's clock one hour ahead: correlations leave the search span
    side, ticks, dets = read_tag_file(tags_dir / "bob.tags")
    shifted = tmp_path / "bob_shifted.tags"
    write_tag_file(shifted, side, ticks + np.uint64(3600 * 8_000_000_000), dets)
    # finer segmentation so the peak search runs out of patience, not data
    fine = tmp_path / "fine.conf"
    fine.write_text(_FAST_CONFIG + "segment_seconds = 0.5\n")
    code = main(["replay", "--alice", str(tags_dir / "alice.tags"),
                 "--bob", str(shifted), "--config", str(fine)])
    assert code == EXIT_TRANSPORT


def test_replay_rejects_swapped_sides(config_file, tmp_path, capsys):
    tags_dir = tmp_path / "tags"
    assert main(["run", "--config", str(config_file),
                 "--dump-tags", str(tags_dir)]) == EXIT_OK
    capsys.readouterr()
    code = main(["replay", "--alice", str(tags_dir / "bob.tags"),
                 "--bob", str(tags_dir / "alice.tags"),
                 "--config", str(config_file)])
    assert code == EXIT_CONFIG
    assert "side" in capsys.readouterr().err


def test_replay_truncated_file(config_file, tmp_path, capsys):
    tags_dir = tmp_path / "tags"
    assert main(["run", "--config", str(config_file),
                 "--dump-tags", str(tags_dir)]) == EXIT_OK
    capsys.readouterr()
    broken = tmp_path / "broken.tags"
    broken.write_bytes((tags_dir / "alice.tags").read_bytes()[:-7])
    code = main(["replay", "--alice", str(broken),
                 "--bob", str(tags_dir / "bob.tags"),
                 "--config", str(config_file)])
    assert code == EXIT_CONFIG
    assert "error" in capsys.readouterr().err


def test_full_intercept_attack_exits_insecure(tmp_path, capsys):
    path = tmp_path / "attack.conf"
    path.write_text(
        "pair_rate = 20000\nbackground_rate = 0\nvisibility_hv = 1.0\n"
        "visibility_diag = 1.0\nduration = 1.5\nbob_delay = 500\n"
        "rng_seed = 3\nblock_min_key_bits = 1500\nintercept_fraction = 1.0\n"
    )
    assert main(["run", "--config", str(path)]) == EXIT_INSECURE
    capsys.readouterr()


def test_bad_config_file_exits_config_error(tmp_path, capsys):
    path = tmp_path / "bad.conf"
    path.write_text("pair_rate = -5\n")
    assert main(["run", "--config", str(path)]) == EXIT_CONFIG
    assert "pair_rate" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.conf")]) == EXIT_CONFIG
    capsys.readouterr()


def test_run_over_local_socket(config_file, tmp_path, capsys):
    keys_dir = tmp_path / "keys"
    code = main(["run", "--config", str(config_file),
                 "--transport", "socket", "--keys", str(keys_dir)])
    capsys.readouterr()
    assert code == EXIT_OK
    assert ((keys_dir / "alice.key").read_bytes()
            == (keys_dir / "bob.key").read_bytes() != b"")
