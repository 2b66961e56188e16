import numpy as np

from lobspde import streams


def test_chunking_does_not_change_paths():
    whole = streams.standard_normals(5, 300, (2, 7))
    parts = [streams.standard_normals(5, s, (2, 7), path_offset=o) for o, s in streams.chunks(300, 37)]
    assert np.array_equal(whole, np.concatenate(parts))


def test_streams_and_seeds_are_distinct():
    a = streams.standard_normals(1, 10, (5,))
    assert not np.allclose(a, streams.standard_normals(2, 10, (5,)))
    assert not np.allclose(a, streams.standard_normals(1, 10, (5,), stream=1))


def test_map_chunks_threads_match_serial():
    fn = lambda o, s: float(streams.standard_normals(3, s, (4,), path_offset=o).sum())
    assert streams.map_chunks(fn, 500, 64) == streams.map_chunks(fn, 500, 64, n_jobs=3)


def test_empty_request():
    assert streams.standard_normals(0, 0, (3,)).shape == (0, 3)
