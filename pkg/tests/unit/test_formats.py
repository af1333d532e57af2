"""
Unit tests for feature files, manifests and WAV audio

This module writes real files into a temporary directory.
"""

import json
import shutil
import struct
import tempfile
import unittest
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from dmha.exceptions import FeatureFileException, ManifestException, WaveformFormatException
from dmha.formats import (
    ManifestEntry,
    decode_features,
    encode_features,
    inspect_wav,
    read_features,
    read_manifest,
    read_wav,
    write_features,
    write_manifest,
    write_wav,
)


class TestFeatureFiles(unittest.TestCase):
    """DMHF encoding"""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_round_trip_bit_exact(self):
        """Test writing and reading features bit for bit"""
        array = np.random.default_rng(0).normal(size=(3, 5, 4)).astype(np.float32)
        path = Path(self.test_dir) / 'x.dmhf'
        write_features(path, array)
        np.testing.assert_array_equal(read_features(path), array)

    def test_header_layout(self):
        """Test the feature file header fields"""
        payload = encode_features(np.zeros((2, 3, 4), dtype=np.float32))
        self.assertEqual(payload[:4], b'DMHF')
        self.assertEqual(struct.unpack('<HIII', payload[4:18]), (1, 2, 3, 4))
        self.assertEqual(len(payload), 18 + 2 * 3 * 4 * 4)

    def test_two_dimensional_is_single_layer(self):
        """Test storing a 2-D array as one layer"""
        array = np.ones((6, 4), dtype=np.float32)
        self.assertEqual(decode_features(encode_features(array)).shape, (1, 6, 4))

    def test_bad_magic(self):
        """Test rejecting a file with the wrong magic"""
        payload = bytearray(encode_features(np.zeros((1, 1, 1))))
        payload[:4] = b'XXXX'
        with self.assertRaises(FeatureFileException):
            decode_features(bytes(payload))

    def test_truncated(self):
        """Test rejecting a truncated feature file"""
        payload = encode_features(np.zeros((1, 2, 2)))
        with self.assertRaises(FeatureFileException):
            decode_features(payload[:-1])
        with self.assertRaises(FeatureFileException):
            decode_features(payload[:10])


class TestManifest(unittest.TestCase):
    """JSON-lines manifests"""

    def setUp(self):
        self.test_dir = Path(tempfile.mkdtemp())
        write_features(self.test_dir / 'a.dmhf', np.zeros((1, 2, 3)))

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def _write(self, rows):
        path = self.test_dir / 'manifest.jsonl'
        path.write_text(''.join(json.dumps(row) + '\n' for row in rows), encoding='utf-8')
        return path

    def test_round_trip(self):
        """Test writing and reading a manifest"""
        entries = [ManifestEntry(id='u1', label=3, acoustic_path=self.test_dir / 'a.dmhf', split='train')]
        path = self.test_dir / 'manifest.jsonl'
        write_manifest(path, entries)
        loaded = read_manifest(path)
        self.assertEqual(loaded[0].id, 'u1')
        self.assertEqual(loaded[0].label, 3)
        self.assertEqual(loaded[0].split, 'train')
        self.assertTrue(loaded[0].acoustic_path.is_file())

    def test_paths_relative_to_manifest(self):
        """Test resolving paths against the manifest directory"""
        path = self._write([{'id': 'u1', 'acoustic_path': 'a.dmhf', 'label': 'sadness'}])
        entry = read_manifest(path)[0]
        self.assertEqual(entry.label, 2)
        self.assertEqual(entry.acoustic_path, self.test_dir / 'a.dmhf')

    def test_duplicate_ids(self):
        """Test rejecting duplicate utterance ids"""
        row = {'id': 'u1', 'acoustic_path': 'a.dmhf', 'label': 0}
        with self.assertRaises(ManifestException):
            read_manifest(self._write([row, row]))

    def test_missing_file(self):
        """Test rejecting an entry whose feature file is missing"""
        with self.assertRaises(ManifestException):
            read_manifest(self._write([{'id': 'u1', 'acoustic_path': 'nope.dmhf', 'label': 0}]))

    def test_unknown_key(self):
        """Test rejecting an unknown manifest key"""
        with self.assertRaises(ManifestException):
            read_manifest(self._write([{'id': 'u1', 'acoustic_path': 'a.dmhf', 'label': 0, 'speaker': 'x'}]))

    def test_bad_label(self):
        """Test rejecting an unknown emotion label"""
        with self.assertRaises(ManifestException):
            read_manifest(self._write([{'id': 'u1', 'acoustic_path': 'a.dmhf', 'label': 9}]))


class TestWav(unittest.TestCase):
    """16 kHz mono 16-bit PCM only"""

    def setUp(self):
        self.test_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_round_trip(self):
        """Test writing and reading 16-bit PCM"""
        samples = np.round(np.sin(np.arange(1600) / 10.0) * 16000) / 32768.0
        path = self.test_dir / 'tone.wav'
        write_wav(path, samples)
        self.assertEqual(inspect_wav(path)['sample_rate'], 16000)
        np.testing.assert_allclose(read_wav(path), samples, atol=1e-7)

    def test_wrong_rate_rejected(self):
        """Test rejecting audio not sampled at 16 kHz"""
        path = self.test_dir / 'fast.wav'
        wavfile.write(str(path), 8000, np.zeros(800, dtype=np.int16))
        with self.assertRaises(WaveformFormatException):
            read_wav(path)

    def test_stereo_rejected(self):
        """Test rejecting stereo audio"""
        path = self.test_dir / 'stereo.wav'
        wavfile.write(str(path), 16000, np.zeros((800, 2), dtype=np.int16))
        with self.assertRaises(WaveformFormatException):
            read_wav(path)

    def test_not_a_wav(self):
        """Test rejecting a file that is not a WAV"""
        path = self.test_dir / 'text.wav'
        path.write_text('hello')
        with self.assertRaises(WaveformFormatException):
            read_wav(path)


if __name__ == '__main__':
    unittest.main()
