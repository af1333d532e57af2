#!/usr/bin/env python3
"""Setup script for the DMHA emotion recognition toolkit"""

from setuptools import setup, find_packages
import os

def read_file(filename):
    with open(filename, 'r', encoding='utf-8') as f:
        return f.read()

setup(
    name='dmha-emotion',
    version='1.0.1',
    description='Double multi-head attention for multimodal speech emotion recognition',
    long_description=read_file('README.md') if os.path.exists('README.md') else '',
    long_description_content_type='text/markdown',
    license='GPL-3.0',
    packages=find_packages('src'),
    package_dir={'': 'src'},
    install_requires=[
        'numpy>=1.22.0',
        'scipy>=1.8.0',
        'scikit-learn>=1.1.0',
        'pillow>=9.0.0',
        'mutagen>=1.45.0',
    ],
    python_requires='>=3.10',
    entry_points={
        'console_scripts': [
            'dmha=dmha.main:main',
        ],
    },
    classifiers=[
        'Development Status :: 4 - Beta',
        'Environment :: Console',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: GNU General Public License v3 (GPLv3)',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
        'Programming Language :: Python :: 3.12',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
    ],
)
