import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixgraph.data import (
    ClassVocabulary,
    DataError,
    Record,
    TrajectoryScene,
    build_windows,
    compute_velocities,
    encode_one_hot,
    load_scene_file,
    synthetic_scene,
    write_scene_file,
)


def write(tmp_path, text, name="scene.txt"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def single_agent(frames, agent=0, cls=0):
    return TrajectoryScene([Record(f, agent, cls, float(f), 0.0) for f in frames])


class TestLoad:
    def test_single_record(self, tmp_path):
        scene = load_scene_file(write(tmp_path, "0\t7\tcar\t10.0\t20.0\n"), ClassVocabulary())
        assert scene.records == [Record(0, 7, 2, 10.0, 20.0)]

    def test_empty_file(self, tmp_path):
        assert load_scene_file(write(tmp_path, "")).records == []

    def test_comments_skipped_and_sorted(self, tmp_path):
        text = "# header\n1\t2\tbus\t0\t0\n0\t3\tbus\t1\t1\n0\t2\tbus\t2\t2\n"
        scene = load_scene_file(write(tmp_path, text))
        assert [(r.frame_id, r.agent_id) for r in scene.records] == [(0, 2), (0, 3), (1, 2)]

    def test_class_change_rejected(self, tmp_path):
        with pytest.raises(DataError, match="agent 7"):
            load_scene_file(write(tmp_path, "0\t7\tcar\t0\t0\n1\t7\tbus\t1\t1\n"))

    def test_unknown_label_names_line(self, tmp_path):
        with pytest.raises(DataError, match=r":2: unknown class label 'tram'"):
            load_scene_file(write(tmp_path, "0\t1\tcar\t0\t0\n0\t2\ttram\t0\t0\n"))

    @pytest.mark.parametrize("line", ["0\t1\tcar\t0\n", "0\t1\tcar\tx\t0\n", "a\t1\tcar\t0\t0\n"])
    def test_malformed_line(self, tmp_path, line):
        with pytest.raises(DataError, match=":1:"):
            load_scene_file(write(tmp_path, line))

    def test_duplicate_rejected(self, tmp_path):
        with pytest.raises(DataError, match="duplicate"):
            load_scene_file(write(tmp_path, "0\t1\tcar\t0\t0\n0\t1\tcar\t5\t5\n"))

    def test_vocabulary_order(self):
        vocab = ClassVocabulary()
        assert [vocab.index(c) for c in ("biker", "pedestrian", "car", "cart", "bus", "skater")] == list(range(6))

    def test_vocabulary_rejects_duplicates(self):
        with pytest.raises(DataError):
            ClassVocabulary(("a", "a"))


class TestWindows:
    def test_exact_span(self):
        assert len(build_windows(single_agent(range(20)), 8, 12, 1)) == 1

    def test_two_starts(self):
        windows = build_windows(single_agent(range(21)), 8, 12, 1)
        assert [w.start_frame for w in windows] == [0, 1]

    def test_full_presence_rule(self):
        scene = TrajectoryScene(
            sorted(
                [Record(f, 0, 0, float(f), 0.0) for f in range(20)] + [Record(f, 1, 1, 0.0, float(f)) for f in range(5, 20)]
            )
        )
        windows = build_windows(scene, 8, 12, 1)
        assert len(windows) == 1 and windows[0].agent_ids == [0]

    def test_short_scene(self):
        assert build_windows(single_agent(range(10)), 8, 12, 1) == []

    def test_agents_ascending_and_present(self):
        scene = synthetic_scene(n_frames=25)
        present = {(r.frame_id, r.agent_id) for r in scene.records}
        for w in build_windows(scene, 8, 12, 2):
            assert w.agent_ids == sorted(w.agent_ids)
            frames = range(w.start_frame, w.start_frame + 20)
            assert all((f, a) in present for f in frames for a in w.agent_ids)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 40), st.integers(2, 8), st.integers(1, 12), st.integers(1, 5))
    def test_window_count_formula(self, n_frames, obs, pred, stride):
        count = len(build_windows(single_agent(range(n_frames)), obs, pred, stride))
        assert count == max(0, (n_frames - obs - pred) // stride + 1)

    def test_future_displacements(self):
        w = build_windows(single_agent(range(20)), 8, 12)[0]
        np.testing.assert_array_equal(w.future_displacements(), np.tile([1.0, 0.0], (12, 1, 1)))


class TestVelocities:
    def test_constant_positions(self):
        assert not compute_velocities(np.ones((5, 3, 2))).any()

    def test_small_case(self):
        pos = np.array([[[0.0, 0.0]], [[1.0, 0.0]], [[2.0, 0.0]]])
        assert compute_velocities(pos)[:, 0].tolist() == [[0, 0], [1, 0], [1, 0]]

    def test_round_trip(self, rng):
        pos = np.cumsum(rng.integers(-5, 6, size=(12, 4, 2)).astype(float), axis=0)
        vel = compute_velocities(pos)
        assert np.array_equal(pos[0] + np.cumsum(vel, axis=0), pos)

    def test_window_velocities_round_trip(self, synthetic_windows):
        w = synthetic_windows[0]
        np.testing.assert_allclose(w.obs_positions[0] + np.cumsum(w.obs_velocities, axis=0), w.obs_positions, atol=1e-12)


class TestOneHot:
    def test_car_column(self):
        assert encode_one_hot([2], ClassVocabulary())[:, 0].tolist() == [0, 0, 1, 0, 0, 0]

    def test_empty(self):
        assert encode_one_hot([], ClassVocabulary()).shape == (6, 0)

    @given(st.lists(st.integers(0, 5), max_size=10))
    def test_column_sums(self, idx):
        assert np.array_equal(encode_one_hot(idx, 6).sum(axis=0), np.ones(len(idx)))

    def test_out_of_range(self):
        with pytest.raises(DataError):
            encode_one_hot([6], ClassVocabulary())


def test_synthetic_scene_shape():
    scene = synthetic_scene()
    assert len({r.agent_id for r in scene.records}) == 6
    assert len({r.class_index for r in scene.records}) == 3
    assert scene.frames() == list(range(20))


def test_write_then_load_round_trip(tmp_path):
    scene = synthetic_scene()
    write_scene_file(scene, tmp_path / "s.txt")
    loaded = load_scene_file(tmp_path / "s.txt")
    assert loaded.records == scene.records
