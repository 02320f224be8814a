# tests/test_data_loader.py
import unittest
import json
import os
import shutil
import sys
import tempfile

import numpy as np

# Add the src directory to the path so we can import our modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.data.data_loader import (
    collect_files,
    file_stem,
    load_model,
    pair_by_stem,
    read_labels,
    read_logprobs,
    read_manifest,
    save_model,
    write_frame_dump,
    write_labels,
    write_logprobs,
)
from src.evaluation.metrics import dump_frames
from src.models.hmm_model import HmmModel, viterbi_offline
from src.models.sequences import LabelSequence, ObservationSequence, PhaseSet
from src.utils.errors import (
    InvariantViolationError,
    IoError,
    NonContiguousFramesError,
    PairingError,
    ParseError,
    RaggedRowsError,
)


class TempDirTestCase(unittest.TestCase):
    """Base class with a scratch directory per test"""

    def setUp(self):
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def path(self, name: str) -> str:
        return os.path.join(self.tmp, name)

    def write(self, name: str, text: str) -> str:
        path = self.path(name)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(path, 'w', newline='', encoding='utf-8') as f:
            f.write(text)
        return path


class TestReadLogprobs(TempDirTestCase):
    """Test feature ingestion"""

    def test_csv(self):
        path = self.write('v.csv', "frame,c0,c1\n0,-0.1,-2.3\n1,-2.3,-0.1\n")
        obs = read_logprobs(path)
        np.testing.assert_array_equal(obs.data, [[-0.1, -2.3], [-2.3, -0.1]])
        self.assertEqual(obs.fps, 1.0)

    def test_crlf(self):
        path = self.write('v.csv', "frame,c0\r\n0,1.5\r\n1,2.5\r\n")
        np.testing.assert_array_equal(read_logprobs(path, fps=2.0).data, [[1.5], [2.5]])

    def test_header_only(self):
        """Test that an empty data section gives T=0 with the header's D"""
        obs = read_logprobs(self.write('v.csv', "frame,c0,c1,c2\n"))
        self.assertEqual((obs.T, obs.D), (0, 3))

    def test_byte_order_mark(self):
        path = self.path('bom.csv')
        with open(path, 'wb') as f:
            f.write(b"\xef\xbb\xbfframe,c0\n0,1.5\n")
        np.testing.assert_array_equal(read_logprobs(path).data, [[1.5]])

    def test_ragged_rows(self):
        path = self.write('v.csv', "frame,c0,c1\n0,1,2\n1,1,2,3\n")
        with self.assertRaises(RaggedRowsError):
            read_logprobs(path)

    def test_non_contiguous_frames(self):
        path = self.write('v.csv', "frame,c0\n0,1\n2,1\n")
        with self.assertRaises(NonContiguousFramesError):
            read_logprobs(path)

    def test_bad_number_reports_line(self):
        path = self.write('v.csv', "frame,c0\n0,1\n1,abc\n")
        with self.assertRaises(ParseError) as ctx:
            read_logprobs(path)
        self.assertEqual(ctx.exception.line, 3)

    def test_bad_header(self):
        with self.assertRaises(ParseError):
            read_logprobs(self.write('v.csv', "t,c0\n0,1\n"))

    def test_missing_file(self):
        with self.assertRaises(IoError):
            read_logprobs(self.path('missing.csv'))

    def test_jsonl(self):
        path = self.write('v.jsonl', '{"frame": 0, "scores": [1.0, 2.0]}\n{"frame": 1, "scores": [3.0, 4.0]}\n')
        np.testing.assert_array_equal(read_logprobs(path).data, [[1.0, 2.0], [3.0, 4.0]])

    def test_jsonl_errors(self):
        with self.assertRaises(RaggedRowsError):
            read_logprobs(self.write('a.jsonl', '{"frame": 0, "scores": [1.0]}\n{"frame": 1, "scores": [1.0, 2.0]}\n'))
        with self.assertRaises(NonContiguousFramesError):
            read_logprobs(self.write('b.jsonl', '{"frame": 1, "scores": [1.0]}\n'))
        with self.assertRaises(ParseError):
            read_logprobs(self.write('c.jsonl', ''))

    def test_write_read_round_trip(self):
        """Test that scores survive CSV and JSONL exactly"""
        rng = np.random.default_rng(0)
        obs = ObservationSequence(rng.normal(size=(20, 3)))
        for name in ('out.csv', 'out.jsonl'):
            write_logprobs(obs, self.path(name))
            np.testing.assert_array_equal(read_logprobs(self.path(name)).data, obs.data)


class TestLabels(TempDirTestCase):
    """Test label files"""

    def test_indices(self):
        labels = read_labels(self.write('l.csv', "frame,phase\n0,2\n1,2\n2,3\n"))
        self.assertEqual(labels.to_list(), [2, 2, 3])

    def test_names(self):
        path = self.write('l.csv', "frame,phase\n0,CalotTriangleDissection\n")
        self.assertEqual(read_labels(path, PhaseSet.surgical()).to_list(), [2])

    def test_names_default_to_surgical_phases(self):
        path = self.write('l.csv', "frame,phase\n0,CalotTriangleDissection\n")
        self.assertEqual(read_labels(path).to_list(), [2])

    def test_indices_without_phases_are_unbounded(self):
        self.assertEqual(read_labels(self.write('l.csv', "frame,phase\n0,12\n")).to_list(), [12])

    def test_non_ascii_digit(self):
        """Test that a superscript digit is a parse error, not a crash"""
        path = self.write('l.csv', "frame,phase\n0,1\n1,²\n")
        with self.assertRaises(ParseError) as ctx:
            read_labels(path)
        self.assertEqual(ctx.exception.line, 3)

    def test_byte_order_mark(self):
        path = self.path('bom.csv')
        with open(path, 'wb') as f:
            f.write(b"\xef\xbb\xbfframe,phase\n0,3\n")
        self.assertEqual(read_labels(path).to_list(), [3])

    def test_not_utf8(self):
        path = self.path('latin.csv')
        with open(path, 'wb') as f:
            f.write(b"frame,phase\n0,Pr\xe9paration\n")
        with self.assertRaises(ParseError):
            read_labels(path)

    def test_unknown_name(self):
        path = self.write('l.csv', "frame,phase\n0,Suturing\n")
        with self.assertRaises(ParseError) as ctx:
            read_labels(path, PhaseSet.surgical())
        self.assertEqual(ctx.exception.line, 2)

    def test_index_out_of_range(self):
        with self.assertRaises(ParseError):
            read_labels(self.write('l.csv', "frame,phase\n0,9\n"), PhaseSet.surgical())

    def test_write(self):
        """Test the exact bytes written for [2, 2] and for an empty sequence"""
        write_labels(LabelSequence([2, 2]), self.path('a.csv'))
        with open(self.path('a.csv')) as f:
            self.assertEqual(f.read(), "frame,phase\n0,2\n1,2\n")
        write_labels(LabelSequence([]), self.path('b.csv'))
        with open(self.path('b.csv')) as f:
            self.assertEqual(f.read(), "frame,phase\n")

    def test_write_names(self):
        phases = PhaseSet.surgical()
        write_labels(LabelSequence([0, 7]), self.path('n.csv'), phases, names=True)
        with open(self.path('n.csv')) as f:
            self.assertEqual(f.read(), "frame,phase\n0,TrocarPlacement\n1,GallbladderRetraction\n")
        self.assertEqual(read_labels(self.path('n.csv'), phases).to_list(), [0, 7])
        with self.assertRaises(InvariantViolationError):
            write_labels(LabelSequence([0]), self.path('x.csv'), names=True)

    def test_round_trip(self):
        """Test 100 random label sequences through write and read"""
        rng = np.random.default_rng(1)
        path = self.path('r.csv')
        for _ in range(100):
            labels = LabelSequence(rng.integers(0, 8, size=int(rng.integers(1, 50))))
            write_labels(labels, path)
            self.assertEqual(read_labels(path).to_list(), labels.to_list())

    def test_frame_dump(self):
        records = dump_frames(LabelSequence([0, 1]), LabelSequence([0, 0]))
        write_frame_dump(records, self.path('dump.csv'))
        with open(self.path('dump.csv')) as f:
            self.assertEqual(f.read(), "frame,time_s,pred,gt,match\n0,0.0,0,0,true\n1,1.0,1,0,false\n")


def small_model(rng: np.random.Generator) -> HmmModel:
    K, D = 3, 2
    covariances = np.empty((K, D, D))
    for k in range(K):
        A = rng.normal(size=(D, D))
        S = A @ A.T + np.eye(D)
        covariances[k] = 0.5 * (S + S.T)
    return HmmModel(rng.dirichlet(np.ones(K)), rng.dirichlet(np.ones(K), size=K),
                    rng.normal(size=(K, D)), covariances)


class TestModelFiles(TempDirTestCase):
    """Test model persistence"""

    def test_round_trip_is_bit_exact(self):
        """Test parameters and decodes before and after save/load"""
        rng = np.random.default_rng(4)
        obs = ObservationSequence(rng.normal(size=(100, 2)))
        for i in range(100):
            model = small_model(rng)
            path = self.path(f"m{i}.json")
            save_model(model, path)
            restored = load_model(path)
            for name in ('initial', 'transition', 'means', 'covariances'):
                np.testing.assert_array_equal(getattr(restored, name), getattr(model, name))
            self.assertEqual(restored.phases.to_list(), model.phases.to_list())
            self.assertEqual(viterbi_offline(restored, obs).states.to_list(),
                             viterbi_offline(model, obs).states.to_list())

    def test_layout(self):
        save_model(small_model(np.random.default_rng(0)), self.path('m.json'))
        with open(self.path('m.json')) as f:
            data = json.load(f)
        self.assertEqual(data['schema_version'], 1)
        self.assertEqual((data['K'], data['D']), (3, 2))
        self.assertEqual(data['phases'], ["phase0", "phase1", "phase2"])

    def _edited(self, **changes) -> str:
        save_model(small_model(np.random.default_rng(0)), self.path('m.json'))
        with open(self.path('m.json')) as f:
            data = json.load(f)
        data.update(changes)
        return self.write('edited.json', json.dumps(data))

    def test_non_stochastic_row(self):
        """Test that a hand-edited row summing to 0.9 is rejected"""
        path = self._edited(transition=[[0.3, 0.3, 0.3], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        with self.assertRaises(InvariantViolationError):
            load_model(path)

    def test_schema_version(self):
        with self.assertRaises(ParseError) as ctx:
            load_model(self._edited(schema_version=2))
        self.assertIn("2", str(ctx.exception))

    def test_missing_field(self):
        save_model(small_model(np.random.default_rng(0)), self.path('m.json'))
        with open(self.path('m.json')) as f:
            data = json.load(f)
        del data['means']
        with self.assertRaises(ParseError):
            load_model(self.write('bad.json', json.dumps(data)))

    def test_invalid_json(self):
        with self.assertRaises(ParseError):
            load_model(self.write('bad.json', "{not json"))

    def test_missing_file(self):
        with self.assertRaises(IoError):
            load_model(self.path('nothing.json'))


class TestFilePairing(TempDirTestCase):
    """Test stems, directory listing, pairing and manifests"""

    def test_file_stem(self):
        self.assertEqual(file_stem('/data/video01.features.csv'), 'video01')
        self.assertEqual(file_stem('video02.csv'), 'video02')

    def test_collect_by_role(self):
        """Test that role markers split a shared directory"""
        for name in ('video01.features.csv', 'video01.labels.csv', 'video02.features.csv', 'notes.txt'):
            self.write(os.path.join('d', name), "")
        features = collect_files([self.path('d')], role='features')
        self.assertEqual([os.path.basename(p) for p in features], ['video01.features.csv', 'video02.features.csv'])
        everything = collect_files([self.path('d')])
        self.assertEqual(len(everything), 3)

    def test_collect_missing(self):
        with self.assertRaises(IoError):
            collect_files([self.path('nowhere')])

    def test_pairing(self):
        pairs = pair_by_stem(['a/video02.features.csv', 'a/video01.features.csv'],
                             ['b/video01.labels.csv', 'b/video02.labels.csv'])
        self.assertEqual([p[0] for p in pairs], ['video01', 'video02'])
        self.assertEqual(pairs[0][2], 'b/video01.labels.csv')

    def test_missing_partner_names_stem(self):
        with self.assertRaises(PairingError) as ctx:
            pair_by_stem(['video01.features.csv', 'video03.features.csv'], ['video01.labels.csv'])
        self.assertEqual(ctx.exception.stem, 'video03')
        self.assertIn("video03", str(ctx.exception))

    def test_manifest(self):
        path = self.write('m/manifest.csv', "stem,features,labels\nv2,x/v2.csv,y/v2.csv\nv1,x/v1.csv,y/v1.csv\n")
        pairs = read_manifest(path, ('features', 'labels'))
        self.assertEqual([p[0] for p in pairs], ['v1', 'v2'])
        self.assertEqual(pairs[0][1], os.path.join(self.path('m'), 'x/v1.csv'))

    def test_manifest_header(self):
        path = self.write('manifest.csv', "stem,pred,gt\nv1,a.csv,b.csv\n")
        with self.assertRaises(ParseError):
            read_manifest(path, ('features', 'labels'))


if __name__ == '__main__':
    unittest.main()
