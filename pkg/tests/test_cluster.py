from __future__ import annotations

import numpy as np
import pytest

from corpusforge.cluster import ClusterParams, cluster_playlist, dbscan
from corpusforge.embedding import EmbeddingTable
from corpusforge.errors import ConfigError, EmptyTableError, MissingEmbeddingError
from corpusforge.manifest import UtteranceRecord

from oracles import adjusted_rand_index, as_partition, brute_dbscan
from synth import axis_centers, cap_point, isolated_point_table, planted_partition, unit


def _utt(utt_id, video_id, playlist_id="pl"):
    start = 0.0
    return UtteranceRecord(utt_id, video_id, playlist_id, start, start + 2, 2.0, 16000)


class TestDbscan:
    def test_identical_points_single_cluster(self):
        table = EmbeddingTable(4, {f"u{i:02d}": [1.0, 0.0, 0.0, 0.0] for i in range(10)})
        labels = dbscan(table, ClusterParams(eps=0.35, min_pts=4))
        assert set(labels.values()) == {0}

    def test_empty_table(self):
        with pytest.raises(EmptyTableError):
            dbscan(EmbeddingTable(4, {}), ClusterParams())

    def test_param_validation(self):
        with pytest.raises(ConfigError):
            ClusterParams(eps=0.0)
        with pytest.raises(ConfigError):
            ClusterParams(min_pts=1)
        with pytest.raises(ConfigError):
            ClusterParams(assign_floor=1.5)

    def test_matches_brute_force_on_planted_partition(self):
        table, truth = planted_partition(seed=101, n_per_cluster=60, n_noise=12)
        params = ClusterParams(eps=0.35, min_pts=4)
        engine = dbscan(table, params)
        oracle = brute_dbscan(list(table.items()), params.eps, params.min_pts)
        assert as_partition(engine) == as_partition(oracle)
        planted = [i for i in table.ids if truth[i] >= 0]
        ari = adjusted_rand_index([truth[i] for i in planted], [engine[i] for i in planted])
        assert ari >= 0.99

    def test_isolated_point_is_noise(self):
        table, isolated = isolated_point_table(seed=55)
        params = ClusterParams()
        engine = dbscan(table, params)
        assert engine[isolated] == -1
        oracle = brute_dbscan(list(table.items()), params.eps, params.min_pts)
        assert oracle[isolated] == -1

    def test_partition_invariant_under_relabeling(self):
        table, _ = planted_partition(seed=7, n_per_cluster=40, n_noise=8)
        params = ClusterParams()
        base = dbscan(table, params)
        rng = np.random.default_rng(0)
        perm = rng.permutation(len(table.ids))
        rename = {old: f"r{perm[i]:04d}" for i, old in enumerate(table.ids)}
        renamed = EmbeddingTable(table.dim, {rename[i]: v for i, v in table.items()})
        relabeled = dbscan(renamed, params)
        mapped_back = {old: relabeled[rename[old]] for old in table.ids}
        assert as_partition(base) == as_partition(mapped_back)

    def test_noise_count_monotone_in_eps(self):
        table, _ = planted_partition(seed=31, n_per_cluster=50, n_noise=15)
        counts = []
        for eps in (0.15, 0.25, 0.35, 0.5, 0.8):
            labels = dbscan(table, ClusterParams(eps=eps, min_pts=4))
            counts.append(sum(1 for v in labels.values() if v == -1))
        assert counts == sorted(counts, reverse=True)


class TestClusterPlaylist:
    def _table_for(self, vecs):
        dim = len(next(iter(vecs.values())))
        return EmbeddingTable(dim, vecs)

    def test_one_speaker_across_two_videos(self):
        rng = np.random.default_rng(2)
        center = axis_centers(1, 16)[0]
        utts, vecs = [], {}
        for vid in ("vidA", "vidB"):
            for k in range(6):
                utt_id = f"{vid}/{k * 1000}-{k * 1000 + 900}"
                utts.append(_utt(utt_id, vid))
                vecs[utt_id] = cap_point(rng, center, np.deg2rad(8.0))
        clusters = cluster_playlist(utts, self._table_for(vecs), ClusterParams())
        assert len(clusters) == 1
        assert set(clusters[0].member_utts) == set(vecs)
        assert clusters[0].cluster_id == "pl#0"
        assert np.linalg.norm(clusters[0].audio_centroid) == pytest.approx(1.0, abs=1e-6)

    def test_two_separated_speakers_exact_partition(self):
        rng = np.random.default_rng(3)
        c1, c2 = axis_centers(2, 16)
        utts, vecs, want = [], {}, {}
        for vid in ("vidA", "vidB"):
            for k in range(10):
                speaker = k % 2
                utt_id = f"{vid}/{k * 1000}-{k * 1000 + 900}"
                utts.append(_utt(utt_id, vid))
                vecs[utt_id] = cap_point(rng, (c1, c2)[speaker], np.deg2rad(8.0))
                want[utt_id] = speaker
        clusters = cluster_playlist(utts, self._table_for(vecs), ClusterParams())
        assert len(clusters) == 2
        got = {}
        for idx, cluster in enumerate(clusters):
            for m in cluster.member_utts:
                got[m] = idx
        # same partition as planted, up to cluster numbering
        mapping = {got[u]: want[u] for u in want}
        assert len(mapping) == 2
        assert all(mapping[got[u]] == want[u] for u in want)

    def test_low_similarity_utterance_discarded(self):
        rng = np.random.default_rng(4)
        center = axis_centers(1, 16)[0]
        stray_dir = np.eye(16)[5]
        utts, vecs = [], {}
        for k in range(8):
            utt_id = f"vidA/{k * 1000}-{k * 1000 + 900}"
            utts.append(_utt(utt_id, "vidA"))
            vecs[utt_id] = cap_point(rng, center, np.deg2rad(6.0))
        stray = "vidA/99000-99900"
        utts.append(_utt(stray, "vidA"))
        vecs[stray] = unit(0.3 * center + np.sqrt(1 - 0.09) * stray_dir)
        clusters = cluster_playlist(
            utts, self._table_for(vecs), ClusterParams(assign_floor=0.5)
        )
        assert len(clusters) == 1
        assert stray not in clusters[0].member_utts

    def test_stage_one_noise_gets_second_chance(self):
        # a lone off-video utterance of the same speaker attaches in stage 3
        rng = np.random.default_rng(5)
        center = axis_centers(1, 16)[0]
        utts, vecs = [], {}
        for k in range(6):
            utt_id = f"vidA/{k * 1000}-{k * 1000 + 900}"
            utts.append(_utt(utt_id, "vidA"))
            vecs[utt_id] = cap_point(rng, center, np.deg2rad(6.0))
        # vidB has too few utterances to form its own cluster (min_pts=4)
        for k in range(2):
            utt_id = f"vidB/{k * 1000}-{k * 1000 + 900}"
            utts.append(_utt(utt_id, "vidB"))
            vecs[utt_id] = cap_point(rng, center, np.deg2rad(6.0))
        clusters = cluster_playlist(utts, self._table_for(vecs), ClusterParams())
        assert len(clusters) == 1
        assert len(clusters[0].member_utts) == 8

    def test_missing_embedding(self):
        utts = [_utt("vidA/0-900", "vidA"), _utt("vidA/1000-1900", "vidA")]
        table = EmbeddingTable(4, {"vidA/0-900": [1, 0, 0, 0]})
        with pytest.raises(MissingEmbeddingError):
            cluster_playlist(utts, table, ClusterParams())

    def test_no_double_membership(self):
        rng = np.random.default_rng(6)
        centers = axis_centers(3, 16)
        utts, vecs = [], {}
        k = 0
        for vid in ("vidA", "vidB", "vidC"):
            for c in centers:
                for _ in range(5):
                    utt_id = f"{vid}/{k * 1000}-{k * 1000 + 900}"
                    utts.append(_utt(utt_id, vid))
                    vecs[utt_id] = cap_point(rng, c, np.deg2rad(8.0))
                    k += 1
        clusters = cluster_playlist(utts, self._table_for(vecs), ClusterParams())
        seen = [m for c in clusters for m in c.member_utts]
        assert len(seen) == len(set(seen))
        assert len(clusters) == 3

    def test_zero_clusters_is_legal(self):
        # three mutually distant utterances: nothing is dense enough
        utts = [_utt(f"vidA/{k}000-{k}900", "vidA") for k in range(3)]
        vecs = {u.utt_id: np.eye(8)[i] for i, u in enumerate(utts)}
        clusters = cluster_playlist(utts, EmbeddingTable(8, vecs), ClusterParams())
        assert clusters == []

    def test_input_order_irrelevant(self):
        rng = np.random.default_rng(8)
        c1, c2 = axis_centers(2, 16)
        utts, vecs = [], {}
        for vid in ("vidA", "vidB"):
            for k in range(8):
                utt_id = f"{vid}/{k * 1000}-{k * 1000 + 900}"
                utts.append(_utt(utt_id, vid))
                vecs[utt_id] = cap_point(rng, (c1, c2)[k % 2], np.deg2rad(8.0))
        table = self._table_for(vecs)
        params = ClusterParams()
        forward = cluster_playlist(utts, table, params)
        shuffled = cluster_playlist(utts[::-1], table, params)
        assert [(c.cluster_id, c.member_utts) for c in forward] == [
            (c.cluster_id, c.member_utts) for c in shuffled
        ]
