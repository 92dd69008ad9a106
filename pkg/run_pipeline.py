#!/usr/bin/env python3
"""
하이브리드 래디언스 필드 실행 스크립트
사용법: python run_pipeline.py {synth|train|render|eval|boundary|run} [옵션]
"""

import sys
from pathlib import Path

# 프로젝트 경로 추가
sys.path.insert(0, str(Path(__file__).parent))

from hybridfield.pipeline import main

if __name__ == "__main__":
    sys.exit(main())
