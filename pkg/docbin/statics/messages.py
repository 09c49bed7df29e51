"""
消息和字符串常量模块
用于集中管理引擎中所有的日志与命令行输出字符串
"""


class StatusMessages:
    """状态和信息提示消息"""
    ENGINE_READY = "文档二值化引擎初始化完成 (seed={seed}, threads={threads})"
    CONFIG_LOADED = "已加载配置文件: {path}"

    # 错误消息
    USAGE_ERROR = "参数错误: {error}"
    RUNTIME_ERROR = "运行失败: {error}"
    INTERNAL_ERROR = "内部错误: {error}"
    SERVICE_CREATE_FAILED = "创建服务 {service} 失败: {error}"


class CommandMessages:
    """命令响应消息"""
    TRAIN_COMPLETE = "✅ 训练完成: {trees} 棵树, {rows} 条样本 (第一轮 {first}, 第二轮 {second})"
    MODEL_WRITTEN = "💾 模型已写入: {path}"
    SAMPLES_WRITTEN = "💾 样本已写入: {path} ({rows} 行)"
    CV_SUMMARY = "📊 交叉验证 F1 = {mean:.4f} ± {std:.4f} ({folds} 折, n_trees={n_trees}, min_samples_split={mss})"
    IMPORTANCE_WRITTEN = "📊 特征族重要性已写入: {path}"
    PREDICT_COMPLETE = "✅ 已二值化 {count} 幅图像，输出目录: {path}"
    BASELINE_COMPLETE = "✅ {method} 基线已处理 {count} 幅图像，输出目录: {path}"
    FEATURES_WRITTEN = "🖼️ 特征通道图已写入: {path}"
    EVAL_WRITTEN = "📤 评价结果已写入: {path}"
    SAMPLE_COMPLETE = "✅ 采样完成: {rows} 行，子类分布 {counts}"
    CURVE_WRITTEN = "📈 学习曲线已写入: {path}"
    SYNTH_COMPLETE = "✅ 已生成 {count} 对合成页面: {path}"
    NO_INPUT_IMAGES = "输入中没有可处理的图像: {path}"

    # 表格标题
    EVAL_TABLE_TITLE = "二值化评价 (平均 F1 {f1:.2f}, PSNR {psnr:.2f}, DRD {drd:.3f})"
    IMPORTANCE_TABLE_TITLE = "特征族重要性"
    CURVE_TABLE_TITLE = "学习曲线"


class LogMessages:
    """日志消息"""
    # 图像与特征
    IMAGE_LOADED = "已读取图像 {path} ({width}x{height})"
    ARTIFACTS_READY = "特征产物就绪 {width}x{height}, 笔画宽度 s={stroke_width}"

    # 采样
    SUBCLASS_POPULATIONS = "[{name}] s={stroke_width}, 子类像素数 {populations}"
    FIRST_PASS_IMAGE_DONE = "[{name}] 第一轮采样完成: {rows} 行"
    ERROR_PASS_IMAGE_DONE = "[{name}] 第二轮采样完成: 错误像素 {errors}, 采样 {rows} 行"
    SAMPLES_LOADED = "从 {path} 读取样本 {rows} 行"

    # 训练
    TRAIN_START = "开始训练: {images} 幅图像, 每图预算 第一轮 {first} / 第二轮 {second}"
    GNB_FITTED = "自举高斯朴素贝叶斯训练完成: {rows} 行, 前景比例 {positive:.3f}"
    ERT_FIT_START = "开始训练极端随机树: {rows} 行, n_trees={n_trees}, K={k}, min_samples_split={mss}"
    ERT_FITTED = "极端随机树训练完成: {trees} 棵树, 平均节点数 {nodes:.1f}, 耗时 {elapsed:.2f}s"
    CV_CANDIDATE = "交叉验证 n_trees={n_trees}, min_samples_split={mss}: F1 {mean:.4f} ± {std:.4f}"
    CV_SELECTED = "交叉验证选定 n_trees={n_trees}, min_samples_split={mss} (F1 {mean:.4f})"

    # 预测
    DECODE_DONE = "[{name}] 解码完成 {width}x{height}, 前景像素 {foreground}, 耗时 {elapsed:.2f}s"
    MODEL_SAVED = "模型已保存: {path} ({trees} 棵树)"
    MODEL_LOADED = "模型已加载: {path} ({trees} 棵树, 指纹 {fingerprint})"
    PATHS_VERIFIED = "决策路径校验通过: {rows} 行 × {trees} 棵树"

    # 评价
    EVAL_UNMATCHED = "评价时找不到配对文件，已跳过: {name}"
    DRD_UNDEFINED = "[{name}] 真值没有非均匀块，DRD 记为 NaN"
    EVAL_DONE = "评价完成 {count} 幅图像: F1 {f1:.2f}, PSNR {psnr:.2f}, DRD {drd:.3f}"

    # 语料与学习曲线
    CORPUS_LOADED = "语料清单: {count} 条记录, 划分 {splits}"
    CORPUS_SPLIT_EXCLUDED = "留出划分 {split}: 训练 {train} 条, 测试 {test} 条"
    CURVE_POINT = "学习曲线 预算 {budget}: F1 {f1:.2f}, PSNR {psnr:.2f}, DRD {drd:.3f}"
