# Copyright (c) 2024, styletween contributors
# Licensed under the BSD 3-Clause License; see LICENSE.

"""
Access information about styletween environment variables.
"""

import os

# home directory for run outputs and caches
STYLETWEEN_HOME = 'STYLETWEEN_HOME'

# override the directory in which runs are written
STYLETWEEN_OUTPUT_DIR = 'STYLETWEEN_OUTPUT_DIR'

# default log level of the command-line tool
STYLETWEEN_LOG_LEVEL = 'STYLETWEEN_LOG_LEVEL'


def _resolve_path(p):
    """
    Expand a leading tilde to the user's home directory.

    :param p: path string, ``str``
    """
    if p and p[0] == '~':
        return os.path.expanduser(p)
    return p


def get_styletween_home(env=None):
    """
    Get the styletween home directory.  The :envvar:`STYLETWEEN_HOME`
    environment variable has priority. If it is not set,
    ``$HOME/.styletween`` is used.

    :param env: override ``os.environ`` dictionary, ``dict``
    :returns: path of the home directory, ``str``
    """
    if env is None:
        env = os.environ
    if STYLETWEEN_HOME in env:
        return _resolve_path(env[STYLETWEEN_HOME])
    return os.path.join(os.path.expanduser('~'), '.styletween')


def get_output_dir(env=None):
    """
    Get the directory in which run artifacts (clip cache, checkpoints,
    reports) are written.  :envvar:`STYLETWEEN_OUTPUT_DIR` has priority,
    otherwise ``$STYLETWEEN_HOME/runs`` is used.

    :param env: override ``os.environ`` dictionary, ``dict``
    :returns: path of the output directory, ``str``
    """
    if env is None:
        env = os.environ
    if STYLETWEEN_OUTPUT_DIR in env:
        return _resolve_path(env[STYLETWEEN_OUTPUT_DIR])
    return os.path.join(get_styletween_home(env), 'runs')


def get_log_level(env=None):
    """
    :param env: override ``os.environ`` dictionary, ``dict``
    :returns: log level name, ``str``
    """
    if env is None:
        env = os.environ
    return env.get(STYLETWEEN_LOG_LEVEL, 'INFO').upper()
