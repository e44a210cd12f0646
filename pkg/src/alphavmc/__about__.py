# SPDX-FileCopyrightText: 2025-present jonnieey <johnjahi55@gmail.com>
#
# SPDX-License-Identifier: MIT
__version__ = "0.1.0"
