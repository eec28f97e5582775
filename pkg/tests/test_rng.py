import numpy as np

from regensim.rng import make_stream, replicate_streams, stream_id


def test_same_key_same_stream():
    assert np.array_equal(make_stream(5, 1, 2).random(8), make_stream(5, 1, 2).random(8))


def test_distinct_keys_differ():
    draws = {tuple(make_stream(5, i).random(4)) for i in range(50)}
    assert len(draws) == 50
    assert not np.array_equal(make_stream(5, 0).random(4), make_stream(6, 0).random(4))


def test_replicate_streams_match_keys():
    reps = replicate_streams(3, 4, 7)
    for i, r in enumerate(reps):
        assert np.array_equal(r.random(3), make_stream(3, 7, i).random(3))


def test_stream_ids_unique_and_stable():
    ids = [stream_id(11, i) for i in range(10_000)]
    assert len(set(ids)) == len(ids)
    assert stream_id(11, 3) == ids[3]
    assert isinstance(ids[0], int)
