export * from "./protocol.js";
export * from "./driver.js";
export * from "./data.js";
export { ReplayLogisticLearner } from "./learner.js";
