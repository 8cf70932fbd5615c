import json

import numpy as np
import pytest

from geoscale.geometry import LonLatRect, geometry_from_geojson, polygon_area
from geoscale.gridding import GridSpec, run_grid_pipeline
from geoscale.ingest import corpus_stats, parse_population, parse_tweets
from geoscale.scaling import fit_all
from geoscale.synth import (
    SynthConfig,
    gen_activity,
    gen_bots,
    gen_population,
    land_geojson,
    write_jsonl,
    youth_share,
)

SMALL = SynthConfig(study=LonLatRect(-3.0, 50.0, -2.0, 51.0), x_gen=6,
                    b_true=0.05, c_true=2.0, pop_log10_mean=1.0,
                    pop_log10_sigma=0.5, seed=7)


class TestConfig:
    def test_rejects_nonpositive_exponents(self):
        with pytest.raises(ValueError):
            SynthConfig(beta_true=0.0)
        with pytest.raises(ValueError):
            SynthConfig(c_true=-1.0)

    def test_rejects_bad_fractions(self):
        with pytest.raises(ValueError):
            SynthConfig(emit_boxes_fraction=1.5)


class TestYouthShare:
    def test_monotone_and_bounded(self):
        densities = [0.1, 1, 10, 100, 1000, 1e6]
        shares = [youth_share(p) for p in densities]
        assert shares == sorted(shares)
        assert all(0.0 <= s <= 0.6 for s in shares)


class TestGenPopulation:
    def test_one_feature_per_cell_with_matching_totals(self):
        fc, gt = gen_population(SMALL)
        assert len(fc["features"]) == 36
        total = sum(f["properties"]["population"] for f in fc["features"])
        assert total == int(gt.population.sum())

    def test_deterministic(self):
        a, _ = gen_population(SMALL)
        b, _ = gen_population(SMALL)
        assert a == b

    def test_roundtrips_through_ingest(self):
        fc, gt = gen_population(SMALL)
        units, diags = parse_population(fc)
        assert diags.skipped == 0
        assert len(units) == 36
        assert sum(u.population for u in units) == pytest.approx(gt.population.sum())


class TestGenActivity:
    def test_ground_truth_matches_emitted_records(self):
        fc, gt = gen_population(SMALL)
        records = gen_activity(SMALL, gt)
        assert len(records) == gt.total_tweets
        users = {r["user"]["id_str"] for r in records}
        assert len(users) == gt.total_users

    def test_every_user_has_at_least_one_tweet(self):
        _, gt = gen_population(SMALL)
        gen_activity(SMALL, gt)
        assert np.all(gt.n_t >= gt.n_u)

    def test_deterministic(self):
        _, gt1 = gen_population(SMALL)
        _, gt2 = gen_population(SMALL)
        assert gen_activity(SMALL, gt1) == gen_activity(SMALL, gt2)

    def test_all_records_parse_and_locate(self):
        fc, gt = gen_population(SMALL)
        records = gen_activity(SMALL, gt)
        lines = [json.dumps(r) for r in records]
        tweets, diags = parse_tweets(lines)
        assert diags.skipped == 0
        stats, located = corpus_stats(tweets, SMALL.study)
        assert stats.located_place == len(records)
        assert stats.discarded_outside == 0

    def test_points_land_in_their_generation_cell(self):
        fc, gt = gen_population(SMALL)
        records = gen_activity(SMALL, gt)
        lines = [json.dumps(r) for r in records]
        tweets, _ = parse_tweets(lines)
        _, located = corpus_stats(tweets, SMALL.study)
        land = geometry_from_geojson(
            land_geojson(SMALL.study)["features"][0]["geometry"])
        units, _ = parse_population(fc)
        grid = run_grid_pipeline(GridSpec(SMALL.study, SMALL.x_gen), land,
                                 located, units)
        np.testing.assert_array_equal(grid.n_t, gt.n_t.astype(float))

    def test_commuters_shift_mass_to_neighbor(self):
        cfg = SynthConfig(study=SMALL.study, x_gen=6, b_true=0.05, c_true=2.0,
                          pop_log10_mean=1.0, pop_log10_sigma=0.5, seed=7,
                          commuter_fraction=0.5)
        _, gt = gen_population(cfg)
        gen_activity(cfg, gt)
        _, gt_base = gen_population(SMALL)
        gen_activity(SMALL, gt_base)
        assert gt.n_t.sum() == gt_base.n_t.sum()
        assert not np.array_equal(gt.n_t, gt_base.n_t)

    def test_box_records_emitted_when_requested(self):
        cfg = SynthConfig(study=SMALL.study, x_gen=6, b_true=0.05, c_true=2.0,
                          pop_log10_mean=1.0, pop_log10_sigma=0.5, seed=7,
                          emit_boxes_fraction=0.5)
        _, gt = gen_population(cfg)
        records = gen_activity(cfg, gt)
        n_boxes = sum(1 for r in records
                      if len({tuple(c) for c in
                              r["place"]["bounding_box"]["coordinates"][0]}) > 1)
        assert 0 < n_boxes < len(records)


class TestExponentRecovery:
    def test_noiseless_generation_recovers_exact_exponents(self):
        cfg = SynthConfig(study=LonLatRect(-3.0, 50.0, -2.0, 51.0), x_gen=10,
                          b_true=0.05, c_true=2.0, noise_dex=0.0,
                          pop_log10_mean=1.3, pop_log10_sigma=0.5, seed=3)
        fc, gt = gen_population(cfg)
        records = gen_activity(cfg, gt)
        tweets, _ = parse_tweets([json.dumps(r) for r in records])
        _, located = corpus_stats(tweets, cfg.study)
        land = geometry_from_geojson(
            land_geojson(cfg.study)["features"][0]["geometry"])
        units, _ = parse_population(fc)
        grid = run_grid_pipeline(GridSpec(cfg.study, cfg.x_gen), land,
                                 located, units)
        fits = fit_all(grid)
        # integer rounding of counts is the only noise left
        assert fits["beta"].exponent == pytest.approx(cfg.beta_true, abs=0.02)
        assert fits["gamma"].exponent == pytest.approx(cfg.gamma_true, abs=0.02)


class TestGenBots:
    def test_each_bot_fixed_location_and_volume(self):
        bots = gen_bots(SMALL, n_bots=2, bot_tweet_fraction=0.02,
                        total_records=1000)
        assert len(bots) == 40
        by_user = {}
        for r in bots:
            by_user.setdefault(r["user"]["id_str"], set()).add(
                tuple(map(tuple, r["place"]["bounding_box"]["coordinates"][0])))
        assert len(by_user) == 2
        assert all(len(locs) == 1 for locs in by_user.values())

    def test_fraction_must_be_positive(self):
        with pytest.raises(ValueError):
            gen_bots(SMALL, 1, 0.0, 100)


class TestOutputs:
    def test_land_layer_covers_study(self):
        land = geometry_from_geojson(
            land_geojson(SMALL.study)["features"][0]["geometry"])
        from geoscale.geometry import spherical_rect_area
        assert polygon_area(land) == pytest.approx(
            spherical_rect_area(SMALL.study), rel=1e-9)

    def test_write_jsonl_byte_stable(self, tmp_path):
        _, gt = gen_population(SMALL)
        records = gen_activity(SMALL, gt)[:50]
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_jsonl(records, p1)
        write_jsonl(records, p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert len(p1.read_text().splitlines()) == 50
