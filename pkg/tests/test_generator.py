import filecmp

import numpy as np
import pytest

from multilog.drain import mine
from multilog.generator import (
    CROSS_NODE_TYPES, FAMILIES, GeneratorConfig, describe_anomalies, effect, generate, schedule, simulate,
)
from multilog.logcore import load_dataset

START = GeneratorConfig().start_ms


def test_catalog():
    cat = describe_anomalies()
    assert [e.anomaly_no for e in cat] == list(range(1, 12))
    assert {e.cause for e in cat} == {"System", "Database"}
    assert effect(6).silent and effect(7).cluster_wide
    assert {4, 5, 7, 8, 9} <= CROSS_NODE_TYPES
    assert not CROSS_NODE_TYPES & {1, 2, 3, 10, 11}


def test_outputs_are_byte_identical(tmp_path):
    cfg = GeneratorConfig(seed=11, duration_s=300, noise_per_hour=30)
    generate(cfg, tmp_path / "a")
    generate(cfg, tmp_path / "b")
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", names, shallow=False)
    assert not mismatch and not errors and len(match) == len(names) >= 8
    ds = load_dataset(tmp_path / "a")
    assert ds == simulate(cfg)


def test_different_seeds_differ():
    a = simulate(GeneratorConfig(seed=1, duration_s=200))
    b = simulate(GeneratorConfig(seed=2, duration_s=200))
    assert a.entries != b.entries


def test_multi2multi_spans_types_and_nodes(small_cluster):
    assert len({l.anomaly_no for l in small_cluster.labels}) >= 2
    assert all(len(l.nodes) >= 2 for l in small_cluster.labels)


def test_single_target_scenarios():
    ds = simulate(GeneratorConfig(seed=2, duration_s=900, scenario="Multi2Single"))
    assert len({l.nodes for l in ds.labels}) == 1 and len(next(iter(ds.labels)).nodes) == 1
    assert len({l.anomaly_no for l in ds.labels}) >= 2
    ds = simulate(GeneratorConfig(seed=2, duration_s=900, scenario="Single2Multi", anomaly_set=(3,)))
    assert {l.anomaly_no for l in ds.labels} == {3} and all(len(l.nodes) >= 2 for l in ds.labels)


def test_hour_long_testbed_size():
    cfg = GeneratorConfig(duration_s=3600)
    assert len(schedule(cfg, np.random.default_rng(0))) >= 40


def per_second(ds, node, pattern):
    counts = np.zeros(ds.time_range[1] // 1000 - START // 1000 + 1)
    for e in ds.entries[node]:
        if pattern in e.message:
            counts[(e.ts - START) // 1000] += 1
    return counts


def inside(ds, node):
    mask = np.zeros(ds.time_range[1] // 1000 - START // 1000 + 1, dtype=bool)
    for l in ds.labels:
        if node in l.nodes:
            mask[(l.start_ts - START) // 1000:(l.end_ts - START) // 1000 + 1] = True
    return mask


def test_frequent_flush_multiplies_flush_lines():
    ds = simulate(GeneratorConfig(seed=3, duration_s=1200, scenario="Single2Single", anomaly_set=(11,)))
    node = next(iter(ds.labels[0].nodes))
    flush = per_second(ds, node, "Flush memtable")
    m = inside(ds, node)
    assert flush[m].mean() >= 5 * flush[~m].mean()


def test_export_emits_currently_data_template():
    ds = simulate(GeneratorConfig(seed=4, duration_s=600, scenario="Single2Single", anomaly_set=(8,)))
    reg = mine(e.message for s in ds.entries for e in s)
    assert "Currently [*] data" in [" ".join(t.tokens) for t in reg.templates]


def test_machine_down_silences_the_node_and_alerts_peers():
    ds = simulate(GeneratorConfig(seed=5, duration_s=600, scenario="Single2Single", anomaly_set=(6,)))
    node = next(iter(ds.labels[0].nodes))
    for l in ds.labels:
        assert not any(l.start_ts <= e.ts <= l.end_ts for e in ds.entries[node])
    peer = (node + 1) % ds.n_nodes
    assert per_second(ds, peer, "timed out")[inside(ds, node)].mean() > 0.5


def test_every_non_silent_episode_shows_its_signature():
    ds = simulate(GeneratorConfig(seed=6, duration_s=1800))
    regular = {}
    for l in ds.labels:
        eff = effect(l.anomaly_no)
        keys = list(eff.local_rates) + [k for _, seq in eff.sequences for k in seq]
        if not keys:
            continue
        words = FAMILIES[keys[0]].template.split("{")[0].strip()
        hits = sum(words in e.message for n in l.nodes for e in ds.entries[n] if l.start_ts <= e.ts <= l.end_ts)
        assert hits >= 5, (l, words)


def test_poisson_counts_are_stationary():
    # one local, non cross-node type keeps every other node on the normal workload
    cfg = GeneratorConfig(seed=7, duration_s=3600, scenario="Single2Single", anomaly_set=(1,))
    ds = simulate(cfg)
    target = next(iter(ds.labels[0].nodes))
    node = (target + 1) % cfg.n_nodes
    counts = per_second(ds, node, "")[1:cfg.duration_s]
    lam = cfg.base_rate
    assert counts.mean() == pytest.approx(lam, rel=0.03)
    within = np.abs(counts - lam) <= 3 * np.sqrt(lam)
    assert within.mean() >= 0.99


def test_glitches_are_unlabeled_and_outside_episodes():
    quiet = simulate(GeneratorConfig(seed=8, duration_s=1200))
    noisy = simulate(GeneratorConfig(seed=8, duration_s=1200, noise_per_hour=60))
    assert quiet.labels == noisy.labels
    assert noisy.n_entries() > quiet.n_entries()


@pytest.mark.parametrize("kwargs", [
    dict(scenario="Single2Single"),
    dict(scenario="Multi2Multi", anomaly_set=(3,)),
    dict(anomaly_set=(0, 3)),
    dict(scenario="Nope"),
    dict(duration_s=0),
    dict(noise_per_hour=-1),
])
def test_invalid_configs(kwargs):
    with pytest.raises(ValueError):
        GeneratorConfig(**kwargs)


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        generate(GeneratorConfig(duration_s=100), blocker / "sub")
