export { Tensor, Tape, Rng, withTape, initConvWeight } from "./tensor";
export * as ops from "./ops";
export { cubicWeight, downsample4x, upsample4x, quantizeU8 } from "./resample";
export { blockMatchFlow, TinyFlowNet } from "./flow";
export { Model, ModelConfig, ForwardInput, defaultConfig, LAYER_DIRECTIONS } from "./model";
export { Adam, Clip, trainStep, sampleCrop, saveCheckpoint, loadCheckpoint } from "./train";
export { syntheticClip } from "./synthetic";
export { psnrU8, psnrPlanes } from "./metrics";
export { encodePng, decodePng, Image } from "./png";
export { readRaw, writeRaw, readWorkdir, readIndices, RawVideo } from "./rawio";
export { reconstructWorkdir, trainCommand } from "./cli";
