# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.
"""caplab: information-theoretic learning capacity of finite learners"""

from .runner import CapLab
from .util import CapLabError

__author__ = "caplab developers"
__maintainer__ = "caplab developers"
