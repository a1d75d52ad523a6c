import pytest

from vodcache.catalog import load_catalog
from vodcache.cli import main
from vodcache.config import OUTPUT_DIR_ENV
from vodcache.workload import load_trace

SMALL_CONFIG = """
seed = 3

[catalog]
num_videos = 30
num_servers = 2
size_dist = "uniform"
size_low = 1000
size_high = 5000

[workload]
num_requests = 500

[cache]
capacity_fraction = 0.2
"""


@pytest.fixture
def config_file(tmp_path, monkeypatch):
    monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)
    path = tmp_path / 'small.toml'
    path.write_text(SMALL_CONFIG)
    return str(path)


def test_gen_catalog(tmp_path, capsys):
    path = tmp_path / 'catalog.json'
    assert main(['gen-catalog', '--num-videos', '20', '--num-servers', '2', '-o', str(path)]) == 0
    assert len(load_catalog(path)) == 20
    assert "20 videos" in capsys.readouterr().out


def test_gen_trace(tmp_path, capsys, config_file):
    catalog_path = tmp_path / 'catalog.json'
    trace_path = tmp_path / 'trace.csv'
    assert main(['gen-catalog', '-c', config_file, '-o', str(catalog_path)]) == 0
    assert main(['gen-trace', '--catalog', str(catalog_path), '--num-requests', '200', '--stats',
                 '-o', str(trace_path)]) == 0
    assert len(load_trace(trace_path)) == 200
    out = capsys.readouterr().out
    assert "200 events" in out
    assert "distinct_videos" in out


def test_simulate(tmp_path, capsys, config_file):
    assert main(['simulate', '-c', config_file, '-p', 'LRU', '--output-dir', str(tmp_path), '--eviction-log']) == 0
    assert (tmp_path / 'run.csv').exists()
    assert (tmp_path / 'run.json').exists()
    assert (tmp_path / 'run.evictions.csv').exists()
    assert "LRU: requests=500" in capsys.readouterr().out


def test_simulate_over_seeds(capsys, config_file):
    assert main(['simulate', '-c', config_file, '--seeds', '1,2']) == 0
    out = capsys.readouterr().out
    assert "seed 1:" in out and "seed 2:" in out and "average:" in out


def test_sweep_and_plot(tmp_path, config_file):
    sweep_path = tmp_path / 'sweep.csv'
    assert main(['sweep', '-c', config_file, '--axis', 'capacity_fraction', '--values', '0.1,0.3',
                 '--policies', 'LRU,RV', '-o', str(sweep_path)]) == 0
    assert len(sweep_path.read_text().splitlines()) == 5
    image_path = tmp_path / 'sweep.png'
    assert main(['plot', str(sweep_path), '-m', 'byte_hit_ratio', '-o', str(image_path)]) == 0
    assert image_path.exists()


def test_compare(tmp_path, capsys, config_file):
    for policy in ('LRU', 'RV'):
        assert main(['simulate', '-c', config_file, '-p', policy, '--output-dir', str(tmp_path),
                     '--stem', policy.lower()]) == 0
    out_path = tmp_path / 'compare.csv'
    assert main(['compare', f"base={tmp_path / 'lru.json'}", str(tmp_path / 'rv.json'), '-b', 'base',
                 '-o', str(out_path)]) == 0
    assert "RV vs base" in capsys.readouterr().out
    assert out_path.read_text().startswith('label,baseline,hit_ratio')


def test_configuration_error_exit_code(tmp_path, capsys):
    path = tmp_path / 'bad.toml'
    path.write_text("[cache]\nsize = 1\n")
    assert main(['simulate', '-c', str(path)]) == 2
    assert capsys.readouterr().err.startswith("configuration error: ")


def test_unknown_policy_exit_code(capsys, config_file):
    assert main(['simulate', '-c', config_file, '-p', 'MRU']) == 2
    assert "unknown policy kind" in capsys.readouterr().err


def test_parse_error_exit_code(tmp_path, capsys, config_file):
    trace_path = tmp_path / 'trace.csv'
    trace_path.write_text("0,1,100\nten,2,100\n")
    assert main(['simulate', '-c', config_file, '--trace', str(trace_path)]) == 3
    assert capsys.readouterr().err.startswith("parse error: ")


def test_validation_error_exit_code(tmp_path, capsys, config_file):
    assert main(['simulate', '-c', config_file, '--output-dir', str(tmp_path)]) == 0
    assert main(['compare', str(tmp_path / 'run.json'), '-b', 'RV']) == 4
    assert capsys.readouterr().err.startswith("validation error: ")


def test_non_ascii_trace_exit_code(tmp_path, capsys, config_file):
    trace_path = tmp_path / 'trace.csv'
    trace_path.write_bytes(b"0,1,100\n1,\xe9,5\n")
    assert main(['simulate', '-c', config_file, '--trace', str(trace_path)]) == 3
    err = capsys.readouterr().err
    assert err.startswith("parse error: ") and "line 2" in err


def test_sweep_from_light_to_heavy_preset(tmp_path, monkeypatch):
    monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)
    path = tmp_path / 'light.toml'
    path.write_text('preset = "light-to-heavy sweep"\n' + SMALL_CONFIG)
    sweep_path = tmp_path / 'sweep.csv'
    assert main(['sweep', '-c', str(path), '-o', str(sweep_path)]) == 0
    lines = sweep_path.read_text().splitlines()
    assert lines[0].startswith('lambda,status,')
    assert len(lines) == 16
    assert lines[1].startswith('1.0,ok,') and lines[-1].startswith('15.0,ok,')


def test_sweep_needs_an_axis_and_values(capsys, config_file):
    assert main(['sweep', '-c', config_file]) == 2
    assert main(['sweep', '-c', config_file, '--axis', 'alpha']) == 2
    assert "sweep.values" in capsys.readouterr().err


def test_compare_and_plot_take_common_options(tmp_path, monkeypatch, config_file):
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path))
    assert main(['simulate', '-c', config_file, '-p', 'LRU', '--stem', 'lru']) == 0
    assert main(['simulate', '-c', config_file, '-p', 'RV', '--stem', 'rv']) == 0
    assert main(['compare', str(tmp_path / 'lru.json'), str(tmp_path / 'rv.json'), '-b', 'LRU',
                 '-c', config_file, '--seed', '9']) == 0

    sweep_path = tmp_path / 'sweep.csv'
    assert main(['sweep', '-c', config_file, '--axis', 'capacity_fraction', '--values', '0.1,0.3',
                 '-o', str(sweep_path)]) == 0
    assert main(['plot', str(sweep_path), '-c', config_file, '-s', '9']) == 0
    assert (tmp_path / 'sweep_hit_ratio.png').exists()
