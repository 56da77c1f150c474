# multidetect modules
