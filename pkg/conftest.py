import os
import sys

# 让测试直接导入仓库根目录下的 docbin 包
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
