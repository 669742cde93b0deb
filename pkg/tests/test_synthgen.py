from collections import Counter

import numpy as np
import pytest

from vcfp.errors import ValidationError
from vcfp.preprocess import DirectionFilter, direction_filter, pad_trim, to_numeric
from vcfp.synthgen import (
    CommandProfile,
    GenConfig,
    OutgoingShape,
    ResponseShape,
    generate_dataset,
    generate_trace,
    make_command_profiles,
)
from vcfp.traces import CommandCategory, validate_trace


def _shape(jitter=0.0, total=5000, size_mean=1000.0, ia_mean=5.0):
    return ResponseShape(
        total_bytes=total,
        packet_size_mean=size_mean,
        packet_size_std=80.0,
        interarrival_mean=ia_mean,
        interarrival_std=1.0,
        jitter=jitter,
    )


def _profile(category, n_variants, jitter=0.0, command_id=0):
    return CommandProfile(
        command_id=command_id,
        category=category,
        response_variants=tuple(
            _shape(jitter=jitter, total=4000 + 2200 * k, ia_mean=3.0 + k) for k in range(n_variants)
        ),
        query_shape=_shape(jitter=jitter, total=3000),
    )


def _rng(*entropy):
    return np.random.default_rng(np.random.SeedSequence(list(entropy)))


class TestGenConfig:
    def test_ratios_must_sum_to_one(self):
        with pytest.raises(ValidationError):
            GenConfig(num_classes=2, traces_per_class=1, category_ratios=(0.5, 0.4, 0.2))

    def test_counts_positive(self):
        with pytest.raises(ValidationError):
            GenConfig(num_classes=0, traces_per_class=1)


class TestMakeCommandProfiles:
    def test_category_counts_match_default_ratios(self):
        cfg = GenConfig(num_classes=100, traces_per_class=1, seed=7)
        profiles = make_command_profiles(cfg)
        counts = Counter(p.category for p in profiles)
        assert counts[CommandCategory.SINGLE] == 45
        assert counts[CommandCategory.TIME_SENSITIVE] == 21
        assert counts[CommandCategory.MULTIPLE] == 34

    def test_degenerate_single_ratio(self):
        cfg = GenConfig(num_classes=1, traces_per_class=1, category_ratios=(1.0, 0.0, 0.0))
        profiles = make_command_profiles(cfg)
        assert len(profiles) == 1
        assert profiles[0].category is CommandCategory.SINGLE
        assert len(profiles[0].response_variants) == 1

    def test_determinism(self):
        cfg = GenConfig(
            num_classes=3, traces_per_class=1, category_ratios=(1 / 3, 1 / 3, 1 / 3), seed=7
        )
        assert make_command_profiles(cfg) == make_command_profiles(cfg)

    def test_largest_remainder_is_exhaustive(self):
        cfg = GenConfig(num_classes=10, traces_per_class=1, category_ratios=(0.5, 0.25, 0.25))
        profiles = make_command_profiles(cfg)
        assert len(profiles) == 10

    def test_variant_count_invariants(self):
        cfg = GenConfig(num_classes=50, traces_per_class=1, seed=3)
        for p in make_command_profiles(cfg):
            n = len(p.response_variants)
            if p.category is CommandCategory.SINGLE:
                assert n == 1
            elif p.category is CommandCategory.MULTIPLE:
                assert 2 <= n <= 8
            else:
                assert n >= 2


class TestCommandProfileInvariants:
    def test_single_requires_one_variant(self):
        with pytest.raises(ValidationError):
            _profile(CommandCategory.SINGLE, 2)

    def test_multiple_requires_two_to_eight(self):
        with pytest.raises(ValidationError):
            _profile(CommandCategory.MULTIPLE, 1)
        with pytest.raises(ValidationError):
            _profile(CommandCategory.MULTIPLE, 9)

    def test_jitter_bounds(self):
        with pytest.raises(ValidationError):
            _shape(jitter=1.5)


class TestGenerateTrace:
    def test_single_zero_jitter_incoming_identical_across_voices(self):
        profile = _profile(CommandCategory.SINGLE, 1)
        a = generate_trace(profile, 0, 0, _rng(1)).trace
        b = generate_trace(profile, 3, 0, _rng(2)).trace
        incoming_a = direction_filter(a, DirectionFilter.INCOMING)
        incoming_b = direction_filter(b, DirectionFilter.INCOMING)
        assert incoming_a == incoming_b
        outgoing_a = direction_filter(a, DirectionFilter.OUTGOING)
        outgoing_b = direction_filter(b, DirectionFilter.OUTGOING)
        assert outgoing_a != outgoing_b

    def test_multiple_variants_roughly_uniform(self):
        profile = _profile(CommandCategory.MULTIPLE, 5)
        rng = _rng(99)
        lengths = Counter()
        draws = 10_000
        for _ in range(draws):
            lt = generate_trace(profile, 0, 0, rng)
            n_in = sum(1 for p in lt.trace.packets if p.direction == -1)
            lengths[n_in] += 1
        # 5 variants with distinct byte budgets give 5 distinct incoming counts
        assert len(lengths) == 5
        for count in lengths.values():
            assert count / draws == pytest.approx(0.2, abs=0.02)

    def test_time_sensitive_epoch_indexing(self):
        profile = _profile(CommandCategory.TIME_SENSITIVE, 3)
        t0 = generate_trace(profile, 0, 0, _rng(1)).trace
        t1 = generate_trace(profile, 0, 1, _rng(1)).trace
        assert direction_filter(t0, DirectionFilter.INCOMING) != direction_filter(
            t1, DirectionFilter.INCOMING
        )

    def test_time_sensitive_epoch_out_of_range(self):
        profile = _profile(CommandCategory.TIME_SENSITIVE, 2)
        with pytest.raises(ValidationError):
            generate_trace(profile, 0, 5, _rng(1))

    def test_generated_traces_are_valid(self):
        profile = _profile(CommandCategory.MULTIPLE, 4, jitter=0.8)
        for k in range(30):
            lt = generate_trace(profile, k % 5, 0, _rng(k))
            assert validate_trace(lt.trace).ok


class TestGenerateDataset:
    def test_counts_per_class_and_voice(self):
        cfg = GenConfig(num_classes=10, traces_per_class=50, num_voices=5, seed=1)
        d = generate_dataset(cfg)
        assert len(d) == 500
        cells = Counter((lt.command_id, lt.voice_id) for lt in d.traces)
        assert all(v == 10 for v in cells.values())
        assert len(cells) == 50

    def test_determinism(self):
        cfg = GenConfig(num_classes=4, traces_per_class=6, seed=9)
        assert generate_dataset(cfg) == generate_dataset(cfg)

    def test_zero_noise_cells_identical(self):
        cfg = GenConfig(num_classes=6, traces_per_class=24, noise_level=0.0, seed=4)
        d = generate_dataset(cfg, epochs=2)
        groups: dict[tuple, list] = {}
        for lt in d.traces:
            n_in = sum(1 for p in lt.trace.packets if p.direction == -1)
            in_bytes = sum(p.size for p in lt.trace.packets if p.direction == -1)
            # (class, voice, response signature) identifies the variant cell
            groups.setdefault((lt.command_id, lt.voice_id, n_in, in_bytes), []).append(lt.trace)
        for traces in groups.values():
            assert all(t == traces[0] for t in traces)

    def test_epoch_bound_checked(self):
        cfg = GenConfig(num_classes=3, traces_per_class=2, seed=1)
        with pytest.raises(ValidationError):
            generate_dataset(cfg, epochs=17)

    def test_noise_level_monotone_in_class_spread(self):
        # average pairwise L1 distance between numeric vectors within a class
        # grows with the noise level; fixed voice and single-response classes
        # make jitter the only dispersion source
        spreads = []
        for noise in (0.0, 0.1, 0.3):
            cfg = GenConfig(
                num_classes=2,
                traces_per_class=30,
                category_ratios=(1.0, 0.0, 0.0),
                num_voices=1,
                noise_level=noise,
                seed=12,
            )
            d = generate_dataset(cfg, epochs=1)
            dist_sum, pairs = 0.0, 0
            for cls in range(2):
                vecs = [
                    pad_trim(to_numeric(lt.trace), 200)
                    for lt in d.traces
                    if lt.command_id == cls
                ]
                for i in range(len(vecs)):
                    for j in range(i + 1, len(vecs)):
                        dist_sum += float(np.abs(vecs[i] - vecs[j]).sum())
                        pairs += 1
            spreads.append(dist_sum / pairs)
        assert pairs >= 100
        assert spreads[0] < spreads[1] < spreads[2]

    def test_unmonitored_flag(self):
        cfg = GenConfig(num_classes=2, traces_per_class=2, seed=5)
        d = generate_dataset(cfg, monitored=False)
        assert all(not lt.monitored for lt in d.traces)
