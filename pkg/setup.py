#!/usr/bin/env python

from setuptools import setup

install_requires = ['numpy', 'scipy', 'PyYAML', 'tqdm']

kwargs = {
    'name': 'styletween',
    # same version as in:
    # - src/styletween/__init__.py
    # - CHANGELOG.rst
    'version': '0.1.0',
    'packages': ['styletween'],
    'package_dir': {'': 'src'},
    'entry_points': {
        'console_scripts': ['styletween=styletween.cli:main'],
    },
    'python_requires': '>=3.7',
    'install_requires': install_requires,
    'extras_require': {
        'test': [
            'pytest',
        ]},
    'author': 'styletween contributors',
    'keywords': ['animation', 'motion synthesis', 'in-betweening'],
    'classifiers': [
        'Programming Language :: Python',
        'Programming Language :: Python :: 3',
        'Topic :: Multimedia :: Graphics :: 3D Modeling',
        'License :: OSI Approved :: BSD License'],
    'description': 'Stylized in-between motion synthesis',
    'long_description': """\
        Phase-conditioned motion manifold and style-conditioned sampler
        that fill the frames between a start pose and a target pose.
        """,
    'license': 'BSD'
}

setup(**kwargs)
