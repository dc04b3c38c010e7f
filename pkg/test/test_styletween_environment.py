# Copyright (c) 2024, styletween contributors
# Licensed under the BSD 3-Clause License; see LICENSE.

import os


def test_get_styletween_home():
    from styletween import get_styletween_home
    assert '/fake/home' == get_styletween_home(env={'STYLETWEEN_HOME': '/fake/home'})
    assert os.path.join(os.path.expanduser('~'), '.styletween') == get_styletween_home(env={})
    assert os.path.expanduser('~/st') == get_styletween_home(env={'STYLETWEEN_HOME': '~/st'})


def test_get_output_dir():
    from styletween import get_output_dir
    assert '/runs' == get_output_dir(env={'STYLETWEEN_OUTPUT_DIR': '/runs',
                                          'STYLETWEEN_HOME': '/home'})
    assert os.path.join('/home', 'runs') == get_output_dir(env={'STYLETWEEN_HOME': '/home'})


def test_get_log_level():
    from styletween import get_log_level
    assert 'INFO' == get_log_level(env={})
    assert 'DEBUG' == get_log_level(env={'STYLETWEEN_LOG_LEVEL': 'debug'})
