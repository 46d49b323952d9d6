"""公平性感知合成过采样技能初始化"""
