# Commands module
from . import evaluate, experiment, fit_beta, phantom, segment

# 登録順がヘルプの表示順になる
COMMAND_MODULES = (phantom, fit_beta, segment, evaluate, experiment)
